"""Multi-label losses with an any-class presence term, and their logit gradients.

Four families are provided: ``bce``, ``focal``, ``any_bce`` and ``any_focal``.
The "any" variants add a term on the probability that at least one class is
present.  That probability is a normalized weighted geometric mean of the
class probabilities, which equals ``sigmoid(z_star)`` where ``z_star`` is the
weighted mean of the logits (weight 1 for present classes, ``lam`` for absent
ones).  Everything here works on logits; probabilities are never formed
inside a log.

``LossResult.grad_logits[i]`` is the gradient of ``per_instance[i]`` with
respect to row ``i`` of the logits.  The gradient of ``total`` (the batch
mean) is ``grad_logits / N``.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .balance import BalanceWeights, instance_scale
from .errors import InvalidConfigError, InvalidInputError
from .numerics import _sigmoid, _softplus

FAMILIES = ("bce", "focal", "any_bce", "any_focal")
SURFACE_CASES = ("bce", "any", "redesigned")
SURFACE_EPS = 1e-6


@dataclass(frozen=True)
class LossConfig:
    family: str = "any_bce"
    alpha: float = 1.0
    lam: float = 0.02
    gamma: float = 2.0
    balance: Optional[BalanceWeights] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidConfigError(f"unknown loss family {self.family!r}; expected one of {FAMILIES}")
        _check_alpha_lam(self.alpha, self.lam)
        _check_gamma(self.gamma)

    @property
    def uses_any(self):
        return self.family.startswith("any_")

    @property
    def uses_focal(self):
        return self.family.endswith("focal")

    @property
    def base_family(self):
        return self.family[4:] if self.uses_any else self.family

    def with_balance(self, balance):
        return replace(self, balance=balance)

    def to_dict(self):
        return {
            "family": self.family,
            "alpha": self.alpha,
            "lam": self.lam,
            "gamma": self.gamma,
            "balance": None if self.balance is None else self.balance.to_dict(),
        }


@dataclass
class LossResult:
    total: float
    per_instance: np.ndarray
    grad_logits: np.ndarray


def _check_alpha_lam(alpha, lam):
    if not (0.0 <= alpha <= 1.0):
        raise InvalidConfigError(f"alpha must lie in [0, 1], got {alpha}")
    if not (0.0 <= lam <= 1.0):
        raise InvalidConfigError(f"lambda must lie in [0, 1], got {lam}")


def _check_gamma(gamma):
    if not (gamma >= 0.0 and math.isfinite(gamma)):
        raise InvalidConfigError(f"gamma must be a finite non-negative number, got {gamma}")


def _as_batch(logits, targets):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(targets)
    if z.ndim == 1:
        z = z[None, :]
    if y.ndim == 1:
        y = y[None, :]
    if z.ndim != 2 or z.shape[0] < 1 or z.shape[1] < 1:
        raise InvalidInputError(f"logits must be a non-empty (N, M) matrix, got shape {z.shape}")
    if y.shape != z.shape:
        raise InvalidInputError(f"targets shape {y.shape} does not match logits shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits contain non-finite values")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("targets must be binary")
    return z, y.astype(np.float64)


def _binary_terms(u, gamma):
    """Loss -(1 - p_t)**gamma * log(p_t) and its derivative in u, with p_t = sigmoid(u).

    ``gamma=None`` is plain cross-entropy.  u is the signed logit (z for a
    positive target, -z for a negative one).
    """
    log_pt = -_softplus(-u)
    q = _sigmoid(-u)  # 1 - p_t
    if gamma is None:
        return -log_pt, -q
    pt = _sigmoid(u)
    w = q ** gamma
    # d/du [-(q**g) log pt] = g q**g pt log pt - q**(g+1)
    return w * -log_pt, gamma * w * pt * log_pt - w * q


def any_class_target(targets):
    """1 for rows with at least one present class, else 0."""
    y = np.asarray(targets)
    if y.ndim == 1:
        y = y[None, :]
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("targets must be binary")
    return y.any(axis=1).astype(np.int64)


def _any_logit(z, y, lam):
    """Weighted-mean logit per row and the d z_star / d z_j coefficients."""
    n, m = z.shape
    positive = y.any(axis=1)
    w = np.where(y == 1, 1.0, lam)
    wsum = w.sum(axis=1)
    # negative rows: all weights equal lam, so they cancel -> plain mean
    safe = np.where(positive, wsum, 1.0)
    zstar = np.where(positive, (w * z).sum(axis=1) / safe, z.sum(axis=1) / m)
    coef = np.where(positive[:, None], w / safe[:, None], 1.0 / m)
    return zstar, coef, positive


def any_class_logit(logits, targets, lam):
    """Weighted mean logit whose sigmoid is the any-class presence probability.

    For a single row returns a float; for an (N, M) batch returns a vector.
    """
    if not (0.0 <= lam <= 1.0):
        raise InvalidConfigError(f"lambda must lie in [0, 1], got {lam}")
    single = np.ndim(logits) == 1
    z, y = _as_batch(logits, targets)
    zstar, _, _ = _any_logit(z, y, lam)
    return float(zstar[0]) if single else zstar


def _evaluate(z, y, gamma, alpha, lam):
    """Per-instance loss and per-instance gradient for one block of rows."""
    s = 2.0 * y - 1.0
    terms, dterms = _binary_terms(s * z, gamma)
    per = terms.sum(axis=1)
    grad = s * dterms
    if alpha is not None:
        zstar, coef, positive = _any_logit(z, y, lam)
        sa = np.where(positive, 1.0, -1.0)
        aterm, daterm = _binary_terms(sa * zstar, gamma)
        per = per + alpha * aterm
        grad = grad + (alpha * sa * daterm)[:, None] * coef
    return per, grad


def _run(logits, targets, gamma, alpha, lam, threads=1):
    z, y = _as_batch(logits, targets)
    n = z.shape[0]
    if threads <= 1 or n < 2 * threads:
        per, grad = _evaluate(z, y, gamma, alpha, lam)
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(
                lambda ab: _evaluate(z[ab[0]:ab[1]], y[ab[0]:ab[1]], gamma, alpha, lam),
                zip(bounds[:-1], bounds[1:]),
            ))
        per = np.concatenate([p for p, _ in parts])
        grad = np.concatenate([g for _, g in parts])
    return LossResult(_mean(per), per, grad)


def _mean(values):
    # exact summation: result does not depend on how rows were partitioned
    return math.fsum(values) / len(values)


def bce_loss(logits, targets, threads=1):
    return _run(logits, targets, None, None, 0.0, threads)


def focal_loss(logits, targets, gamma=2.0, threads=1):
    _check_gamma(gamma)
    return _run(logits, targets, gamma, None, 0.0, threads)


def any_bce_loss(logits, targets, alpha=1.0, lam=0.02, threads=1):
    _check_alpha_lam(alpha, lam)
    return _run(logits, targets, None, alpha, lam, threads)


def any_focal_loss(logits, targets, alpha=1.0, lam=0.02, gamma=2.0, threads=1):
    _check_alpha_lam(alpha, lam)
    _check_gamma(gamma)
    return _run(logits, targets, gamma, alpha, lam, threads)


def apply_class_balance(result, targets, weights):
    """Scale each instance's loss and gradient row by its cumulative class weight."""
    scale = instance_scale(targets, weights)
    if scale.shape[0] != result.per_instance.shape[0]:
        raise InvalidInputError("targets and loss result cover different numbers of instances")
    per = result.per_instance * scale
    grad = result.grad_logits * scale[:, None]
    return LossResult(_mean(per), per, grad)


def compute_loss(logits, targets, config, threads=1):
    """Dispatch on ``config.family`` and apply class balancing if configured."""
    if config.family == "bce":
        res = bce_loss(logits, targets, threads)
    elif config.family == "focal":
        res = focal_loss(logits, targets, config.gamma, threads)
    elif config.family == "any_bce":
        res = any_bce_loss(logits, targets, config.alpha, config.lam, threads)
    else:
        res = any_focal_loss(logits, targets, config.alpha, config.lam, config.gamma, threads)
    if config.balance is not None:
        res = apply_class_balance(res, targets, config.balance)
    return res


def _logit(p):
    return np.log(p) - np.log1p(-p)


def surface_likelihood(case, targets, p1, p2, lam=0.05, alpha=1.0):
    """Two-class likelihood exp(-loss) at probabilities (p1, p2).

    ``case`` is ``bce`` (product of per-class likelihoods), ``any`` (the
    any-class presence likelihood alone) or ``redesigned`` (their product,
    with the any-class factor raised to ``alpha``).
    """
    if case not in SURFACE_CASES:
        raise InvalidInputError(f"unknown surface case {case!r}; expected one of {SURFACE_CASES}")
    y = np.asarray(targets)
    if y.shape != (2,) or not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("surface targets must be a pair of binary values")
    _check_alpha_lam(alpha, lam)
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if np.any((p1 <= 0) | (p1 >= 1) | (p2 <= 0) | (p2 >= 1)):
        raise InvalidInputError("surface probabilities must lie strictly inside (0, 1)")
    z = np.stack([_logit(p1).ravel(), _logit(p2).ravel()], axis=1)
    yy = np.broadcast_to(y.astype(np.float64), z.shape)
    s = 2.0 * yy - 1.0
    bce = (-_softplus(-s * z)).sum(axis=1)
    zstar, _, positive = _any_logit(z, yy, lam)
    any_ll = -_softplus(-np.where(positive, 1.0, -1.0) * zstar)
    if case == "bce":
        log_l = bce
    elif case == "any":
        log_l = any_ll
    else:
        log_l = bce + alpha * any_ll
    out = np.exp(log_l).reshape(np.broadcast(p1, p2).shape)
    return float(out) if out.ndim == 0 else out


def surface_axis(resolution, eps=SURFACE_EPS):
    """Uniform probability axis on [eps, 1 - eps], symmetric about 0.5."""
    if resolution < 2:
        raise InvalidInputError("resolution must be at least 2")
    return eps + (1.0 - 2.0 * eps) * np.arange(resolution) / (resolution - 1)


def likelihood_surface_grid(case, targets, lam=0.05, resolution=101, alpha=1.0):
    """Likelihood over a uniform (p1, p2) grid as an (R*R, 3) array of (p1, p2, value).

    Rows are ordered with p1 varying slowest.
    """
    axis = surface_axis(int(resolution))
    p1, p2 = np.meshgrid(axis, axis, indexing="ij")
    values = surface_likelihood(case, targets, p1, p2, lam=lam, alpha=alpha)
    return np.column_stack([p1.ravel(), p2.ravel(), np.asarray(values).ravel()])
