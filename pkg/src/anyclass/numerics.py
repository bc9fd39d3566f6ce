"""Numerically stable sigmoid-family primitives.

All functions accept a Python scalar or a numpy array and return the same
kind.  Work is done in float64.  Non-finite inputs are rejected rather than
propagated, since every downstream loss assumes finite logits.
"""

import numpy as np

from .errors import InvalidInputError

# round-off allowance when coercing a computed value into [0, 1]
PROB_ROUNDOFF = 1e-12


def _as_finite(z):
    arr = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("non-finite logit")
    return arr


def _out(arr, like):
    if np.ndim(like) == 0 and not isinstance(like, np.ndarray):
        return float(arr)
    return arr


def _sigmoid(z):
    # z already validated float64 array
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def stable_sigmoid(z):
    """1 / (1 + exp(-z)) without overflow for any finite ``z``."""
    arr = _as_finite(z)
    return _out(_sigmoid(arr), z)


def softplus(z):
    """log(1 + exp(z)) as max(z, 0) + log1p(exp(-|z|))."""
    arr = _as_finite(z)
    return _out(_softplus(arr), z)


def log_sigmoid(z):
    """log(sigmoid(z)) = -softplus(-z); finite and <= 0 for finite ``z``."""
    arr = _as_finite(z)
    return _out(-_softplus(-arr), z)


def as_probability(p, tol=PROB_ROUNDOFF):
    """Validate probabilities, clamping only excursions within ``tol``."""
    arr = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("non-finite probability")
    if np.any(arr < -tol) or np.any(arr > 1.0 + tol):
        raise InvalidInputError("probability outside [0, 1]")
    return _out(np.clip(arr, 0.0, 1.0), p)
