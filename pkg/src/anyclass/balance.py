"""Class-balancing weights from label counts, including a negative category.

The per-category factor is ``(1 - beta) / (1 - beta**n)``; weights are those
factors normalized to sum to the number of categories (M, or M + 1 when
all-zero rows are treated as an extra category).
"""

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ZeroCountError

DEFAULT_BETA = 0.9999


@dataclass(frozen=True)
class ClassCounts:
    per_class: np.ndarray
    negative: int
    total_instances: int
    class_names: Optional[tuple] = None

    def __post_init__(self):
        per = np.asarray(self.per_class, dtype=np.int64)
        object.__setattr__(self, "per_class", per)
        if per.ndim != 1 or per.size == 0:
            raise InvalidInputError("per_class must be a non-empty vector")
        if np.any(per < 0) or self.negative < 0:
            raise InvalidInputError("counts must be non-negative")
        if np.any(per > self.total_instances) or self.negative > self.total_instances:
            raise InvalidInputError("a count exceeds total_instances")

    @property
    def n_classes(self):
        return int(self.per_class.size)


@dataclass(frozen=True)
class BalanceWeights:
    per_class: np.ndarray
    negative: Optional[float] = None
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        per = np.asarray(self.per_class, dtype=np.float64)
        per.setflags(write=False)
        object.__setattr__(self, "per_class", per)
        if per.ndim != 1 or per.size == 0:
            raise InvalidInputError("per_class must be a non-empty vector")
        if not np.all(np.isfinite(per)) or np.any(per <= 0):
            raise InvalidInputError("balance weights must be positive and finite")
        if self.negative is not None and not (self.negative > 0 and math.isfinite(self.negative)):
            raise InvalidInputError("negative weight must be positive and finite")

    @property
    def n_classes(self):
        return int(self.per_class.size)

    @classmethod
    def uniform(cls, n_classes, include_negative=True):
        return cls(np.ones(n_classes), 1.0 if include_negative else None, beta=0.0)

    def to_dict(self):
        return {
            "beta": float(self.beta),
            "per_class": [float(w) for w in self.per_class],
            "negative": None if self.negative is None else float(self.negative),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(np.asarray(d["per_class"], dtype=np.float64), d.get("negative"), float(d["beta"]))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"malformed balance weights record: {exc}") from None

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def count_labels(dataset_or_labels):
    """Count positives per class and all-zero rows.

    Accepts a ``LabelDataset`` or a bare (N, M) binary matrix.
    """
    labels = getattr(dataset_or_labels, "labels", dataset_or_labels)
    names = getattr(dataset_or_labels, "class_names", None)
    labels = np.asarray(labels)
    if labels.ndim != 2 or labels.shape[0] == 0:
        raise InvalidInputError("cannot count labels of an empty dataset")
    per_class = (labels != 0).sum(axis=0).astype(np.int64)
    negative = int(np.sum(~(labels != 0).any(axis=1)))
    return ClassCounts(per_class, negative, int(labels.shape[0]),
                       tuple(names) if names is not None else None)


def _inverse_effective_number(n, beta):
    # (1 - beta) / (1 - beta**n) with beta**n = exp(n log beta)
    if beta == 0.0:
        return 1.0
    return (1.0 - beta) / -math.expm1(n * math.log(beta))


def effective_weights(counts, beta=DEFAULT_BETA, include_negative=True):
    """Balancing weights for every class, plus the negative category if requested.

    Raises ZeroCountError when a class (or the negative category, when
    included) has no instances, since its factor is undefined.
    """
    if not (0.0 <= beta < 1.0):
        raise InvalidConfigError(f"beta must lie in [0, 1), got {beta}")
    names = counts.class_names
    factors = []
    for j, n in enumerate(counts.per_class):
        if n == 0:
            label = names[j] if names is not None else f"#{j}"
            raise ZeroCountError(f"class {label} has no positive instances", label)
        factors.append(_inverse_effective_number(int(n), beta))
    m = len(factors)
    total = math.fsum(factors)
    if include_negative:
        if counts.negative == 0:
            raise ZeroCountError("negative category has no instances", "negative")
        neg = _inverse_effective_number(int(counts.negative), beta)
        denom = total + neg
        return BalanceWeights(
            np.array([(m + 1) * f / denom for f in factors]),
            (m + 1) * neg / denom,
            beta,
        )
    return BalanceWeights(np.array([m * f / total for f in factors]), None, beta)


def instance_scale(targets, weights):
    """Cumulative weight per row: sum of present-class weights, or the negative weight."""
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape[1] != weights.n_classes:
        raise InvalidInputError(
            f"targets have {y.shape[1]} classes but weights cover {weights.n_classes}"
        )
    positive = y.any(axis=1)
    if not positive.all() and weights.negative is None:
        raise InvalidConfigError("negative row encountered but no negative-category weight configured")
    scale = (y * weights.per_class).sum(axis=1)
    if weights.negative is not None:
        scale = np.where(positive, scale, weights.negative)
    return scale
