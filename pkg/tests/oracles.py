"""Reference implementations used only by the tests.

These are written directly from the probability-space formulas and plain
loops, deliberately sharing no code with the package.
"""

import math

import numpy as np


def sigmoid_pair(z):
    """(p, 1 - p), each computed without cancellation."""
    z = np.asarray(z, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-z)), 1.0 / (1.0 + np.exp(z))


def any_class_probability(z, y, lam):
    """Normalized weighted geometric mean of p and of 1 - p (probability space).

    Negative rows use equal weights (the lambda weights cancel).
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y)
    p, q = sigmoid_pair(z)
    if y.any():
        w = np.where(y == 1, 1.0, lam)
    else:
        w = np.ones_like(z)
    e = w / w.sum()
    g = np.prod(p ** e)
    h = np.prod(q ** e)
    return g / (g + h)


def instance_terms(z, y, family, alpha=1.0, lam=0.02, gamma=2.0):
    """Every additive term of one instance's loss, as a vector (probability space)."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y)
    p, q = sigmoid_pair(z)
    pt = np.where(y == 1, p, q)
    focal = family in ("focal", "any_focal")
    g = gamma if focal else 0.0
    terms = list(-((1.0 - pt) ** g) * np.log(pt))
    if family.startswith("any"):
        pa = any_class_probability(z, y, lam)
        pat = pa if y.any() else 1.0 - pa
        terms.append(-alpha * (1.0 - pat) ** g * math.log(pat))
    return np.array(terms)


def instance_loss(z, y, family, alpha=1.0, lam=0.02, gamma=2.0):
    return math.fsum(instance_terms(z, y, family, alpha, lam, gamma))


def fd_gradient(z, y, family, alpha=1.0, lam=0.02, gamma=2.0, h=1e-5):
    """Central differences of one instance's loss.

    Term-by-term differencing keeps round-off from the (constant) terms that
    do not depend on the perturbed coordinate out of the estimate.
    """
    z = np.asarray(z, dtype=np.float64)
    grad = np.empty_like(z)
    for j in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[j] += h
        zm[j] -= h
        diff = instance_terms(zp, y, family, alpha, lam, gamma) - instance_terms(zm, y, family, alpha, lam, gamma)
        grad[j] = math.fsum(diff) / (2 * h)
    return grad


def grad_error(analytic, numeric, small=1e-3):
    """(max relative error over |numeric| >= small, max absolute error elsewhere)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    f = np.asarray(numeric, dtype=np.float64).ravel()
    big = np.abs(f) >= small
    rel = np.max(np.abs(a[big] - f[big]) / np.abs(f[big])) if big.any() else 0.0
    absolute = np.max(np.abs(a[~big] - f[~big])) if (~big).any() else 0.0
    return rel, absolute


def balance_weights(per_class, n_neg, beta, include_negative):
    ne = [(1 - beta) / (1 - beta ** n) for n in per_class]
    if include_negative:
        neg = (1 - beta) / (1 - beta ** n_neg)
        tot = sum(ne) + neg
        return [(len(ne) + 1) * v / tot for v in ne], (len(ne) + 1) * neg / tot
    tot = sum(ne)
    return [len(ne) * v / tot for v in ne], None


# ---------------------------------------------------------------- metrics

def confusion(pred_col, true_col):
    tp = fp = fn = 0
    for p, t in zip(pred_col, true_col):
        if p and t:
            tp += 1
        elif p and not t:
            fp += 1
        elif t and not p:
            fn += 1
    return tp, fp, fn


def fbeta(tp, fp, fn, beta):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    b2 = beta * beta
    den = b2 * precision + recall
    return precision, recall, ((1 + b2) * precision * recall / den if den else 0.0)


def average_precision(scores, targets):
    n = len(scores)
    total = 0.0
    n_pos = sum(1 for t in targets if t)
    precs = []
    for i in range(n):
        if not targets[i]:
            continue
        # rank of i: everything scored higher, or tied and earlier
        ahead = [k for k in range(n) if scores[k] > scores[i] or (scores[k] == scores[i] and k < i)]
        rank = len(ahead) + 1
        hits = 1 + sum(1 for k in ahead if targets[k])
        precs.append(hits / rank)
    total = math.fsum(precs)
    return total / n_pos


def report(scores, targets, tau, ciw=None):
    n, m = len(scores), len(scores[0])
    preds = [[1 if scores[i][j] >= tau else 0 for j in range(m)] for i in range(n)]
    f1s, f2s, aps = [], [], []
    for j in range(m):
        col_p = [preds[i][j] for i in range(n)]
        col_t = [targets[i][j] for i in range(n)]
        tp, fp, fn = confusion(col_p, col_t)
        f1s.append(fbeta(tp, fp, fn, 1.0)[2])
        f2s.append(fbeta(tp, fp, fn, 2.0)[2])
        if any(col_t):
            aps.append(average_precision([scores[i][j] for i in range(n)], col_t))
    pred_neg = [not any(r) for r in preds]
    true_neg = [not any(r) for r in targets]
    tp, fp, fn = confusion(pred_neg, true_neg)
    out = {
        "macro_f1": math.fsum(f1s) / m,
        "macro_f2": math.fsum(f2s) / m,
        "mean_ap": math.fsum(aps) / len(aps) if aps else math.nan,
        "f1_neg": fbeta(tp, fp, fn, 1.0)[2],
        "f2": f2s,
    }
    if ciw is not None:
        out["f2_ciw"] = math.fsum(w * f for w, f in zip(ciw, f2s)) / math.fsum(ciw)
    return out
