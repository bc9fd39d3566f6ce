"""Multi-label evaluation: macro F-beta, class-importance-weighted F2, mAP, F1-Neg.

Conventions:

* a class is predicted present when its probability is >= the threshold;
* precision, recall and F-beta are 0 whenever their denominator is 0;
* average precision is the non-interpolated mean of precision at each
  positive's rank, with ties in score broken by original instance order;
* classes without positives are left out of mAP (with a warning) and count
  as F-beta 0 in the macro averages.
"""

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, UndefinedMetricError
from .numerics import as_probability

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
DEFAULT_THRESHOLD = 0.5


def _check_tau(tau):
    if not (0.0 < tau < 1.0):
        raise InvalidConfigError(f"threshold must lie in (0, 1), got {tau}")


def _scores_targets(scores, targets):
    p = np.asarray(as_probability(np.asarray(scores, dtype=np.float64)))
    y = np.asarray(targets)
    if p.ndim == 1:
        p = p[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if p.shape != y.shape:
        raise InvalidInputError(f"scores shape {p.shape} does not match targets shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInputError("targets must be binary")
    return p, y.astype(np.int64)


def threshold_predictions(scores, tau=DEFAULT_THRESHOLD):
    _check_tau(tau)
    p = np.asarray(as_probability(np.asarray(scores, dtype=np.float64)))
    return (p >= tau).astype(np.int64)


def _safe_div(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den != 0)


def confusion_counts(preds, targets):
    """Per-class (tp, fp, fn) as integer vectors."""
    p = np.asarray(preds)
    y = np.asarray(targets)
    if p.ndim == 1:
        p = p[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if p.shape != y.shape:
        raise InvalidInputError(f"predictions shape {p.shape} does not match targets shape {y.shape}")
    p = p != 0
    y = y != 0
    tp = np.sum(p & y, axis=0)
    fp = np.sum(p & ~y, axis=0)
    fn = np.sum(~p & y, axis=0)
    return tp, fp, fn


def _fbeta_from_counts(tp, fp, fn, beta_f):
    tp = np.asarray(tp, dtype=np.float64)
    precision = _safe_div(tp, tp + fp)
    recall = _safe_div(tp, tp + fn)
    b2 = beta_f * beta_f
    fbeta = _safe_div((1.0 + b2) * precision * recall, b2 * precision + recall)
    return precision, recall, fbeta


def fbeta_per_class(preds, targets, beta_f=1.0):
    """Per-class (precision, recall, F-beta) vectors."""
    if not beta_f > 0:
        raise InvalidConfigError(f"beta_f must be positive, got {beta_f}")
    return _fbeta_from_counts(*confusion_counts(preds, targets), beta_f)


def f2_ciw(per_class_f2, ciw):
    """Class-importance-weighted mean of per-class F2."""
    f2 = np.asarray(per_class_f2, dtype=np.float64)
    w = np.asarray(ciw, dtype=np.float64)
    if f2.shape != w.shape:
        raise InvalidInputError(f"{w.size} importance weights for {f2.size} classes")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidConfigError("class importance weights must be finite and non-negative")
    if not np.any(w > 0):
        raise InvalidConfigError("class importance weights are all zero")
    return math.fsum(w * f2) / math.fsum(w)


def average_precision(scores, targets):
    """Non-interpolated AP of one class column; raises if the column has no positives."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(targets).ravel() != 0
    if s.shape != y.shape:
        raise InvalidInputError("scores and targets differ in length")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision undefined for a class without positives")
    order = np.argsort(-s, kind="stable")
    hits = y[order]
    ranks = np.flatnonzero(hits) + 1
    precision_at_hits = np.arange(1, n_pos + 1) / ranks
    return math.fsum(precision_at_hits) / n_pos


def f1_negative(scores, targets, tau=DEFAULT_THRESHOLD):
    """Binary F1 of the instance-level task 'no class is present'."""
    _check_tau(tau)
    p, y = _scores_targets(scores, targets)
    pred_neg = ~(p >= tau).any(axis=1)
    true_neg = ~(y != 0).any(axis=1)
    _, _, f1 = _fbeta_from_counts(
        np.array([np.sum(pred_neg & true_neg)]),
        np.array([np.sum(pred_neg & ~true_neg)]),
        np.array([np.sum(~pred_neg & true_neg)]),
        1.0,
    )
    return float(f1[0])


@dataclass
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    f2: float
    average_precision: Optional[float]
    tp: int
    fp: int
    fn: int
    support: int


@dataclass
class MetricsReport:
    per_class: list
    macro_f1: float
    macro_f2: float
    mean_ap: float
    f1_neg: float
    threshold: float
    negative_fraction: float
    f2_ciw: Optional[float] = None
    excluded_from_map: list = field(default_factory=list)

    SCALARS = ("macro_f1", "macro_f2", "f2_ciw", "mean_ap", "f1_neg", "negative_fraction", "threshold")

    def scalars(self):
        return {k: getattr(self, k) for k in self.SCALARS}

    def to_dict(self):
        return {
            "format_version": REPORT_FORMAT_VERSION,
            **self.scalars(),
            "excluded_from_map": list(self.excluded_from_map),
            "per_class": [vars(c).copy() for c in self.per_class],
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def csv_header(self, per_class=False):
        cols = list(self.SCALARS)
        if per_class:
            for c in self.per_class:
                cols += [f"{c.name}:{k}" for k in ("precision", "recall", "f1", "f2", "ap")]
        return cols

    def csv_row(self, per_class=False):
        row = [_fmt(v) for v in self.scalars().values()]
        if per_class:
            for c in self.per_class:
                row += [_fmt(v) for v in (c.precision, c.recall, c.f1, c.f2, c.average_precision)]
        return row

    def to_csv(self, per_class=False):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.csv_header(per_class))
        w.writerow(self.csv_row(per_class))
        return buf.getvalue()


def _fmt(v):
    return "" if v is None else repr(float(v))


def full_report(scores, targets, tau=DEFAULT_THRESHOLD, ciw=None, class_names=None):
    """All metrics for one evaluation split.

    ``ciw`` is an optional vector of class importance weights; when it is
    None or empty the report carries no F2-CIW.  If no class has a positive
    instance, ``mean_ap`` is NaN.
    """
    _check_tau(tau)
    p, y = _scores_targets(scores, targets)
    m = p.shape[1]
    names = list(class_names) if class_names is not None else [str(j) for j in range(m)]
    if len(names) != m:
        raise InvalidInputError(f"{len(names)} class names for {m} classes")
    preds = (p >= tau).astype(np.int64)
    tp, fp, fn = confusion_counts(preds, y)
    prec, rec, f1 = _fbeta_from_counts(tp, fp, fn, 1.0)
    _, _, f2 = _fbeta_from_counts(tp, fp, fn, 2.0)

    per_class = []
    aps = []
    excluded = []
    for j in range(m):
        try:
            ap = average_precision(p[:, j], y[:, j])
            aps.append(ap)
        except UndefinedMetricError:
            ap = None
            excluded.append(names[j])
        per_class.append(ClassMetrics(names[j], float(prec[j]), float(rec[j]), float(f1[j]),
                                      float(f2[j]), ap, int(tp[j]), int(fp[j]), int(fn[j]),
                                      int(y[:, j].sum())))
    if excluded:
        msg = f"classes without positives excluded from mAP and scored F-beta 0: {excluded}"
        logger.warning(msg)

    ciw_value = None
    if ciw is not None and len(ciw) > 0:
        ciw_value = f2_ciw(f2, ciw)

    return MetricsReport(
        per_class=per_class,
        macro_f1=math.fsum(f1) / m,
        macro_f2=math.fsum(f2) / m,
        mean_ap=math.fsum(aps) / len(aps) if aps else math.nan,
        f1_neg=f1_negative(p, y, tau),
        threshold=float(tau),
        negative_fraction=float(np.mean(~(y != 0).any(axis=1))),
        f2_ciw=ciw_value,
        excluded_from_map=excluded,
    )
