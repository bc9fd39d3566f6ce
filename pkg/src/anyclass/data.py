"""Label datasets: file I/O, statistics, co-occurrence, class filtering,
grouped splitting and a synthetic generator with a controllable share of
all-negative instances.

File formats
------------
CSV: header ``id[,group],<class>...``; one row per instance with 0/1 label
cells.  Features, if any, live in a sidecar ``<stem>.features.csv`` with
header ``id,f0,f1,...``.

JSONL: one object per line, ``{"id": str, "group": str?, "labels": [names],
"features": [floats]?}``.  A missing ``labels`` list means a negative
instance.  An optional first line ``{"class_names": [...]}`` fixes the class
order (and keeps classes that never occur); without it classes are ordered
by first appearance.
"""

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidConfigError, InvalidInputError, ParseError

# Table of the 41 COCO classes kept after removing person and the classes
# that co-occur strongly with it.
COCO_RETAINED_CLASSES = (
    "boat", "bird", "cat", "dog", "bottle", "fork",
    "knife", "spoon", "banana", "apple", "sandwich", "orange",
    "broccoli", "carrot", "hot dog", "pizza", "donut", "cake",
    "chair", "couch", "bed", "dining table", "toilet", "tv",
    "laptop", "mouse", "remote", "keyboard", "cell phone", "microwave",
    "oven", "toaster", "sink", "refrigerator", "book", "clock",
    "vase", "scissors", "teddy bear", "hair drier", "toothbrush",
)


def _readonly(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LabelDataset:
    instance_ids: tuple
    labels: np.ndarray
    class_names: tuple
    group_keys: Optional[tuple] = None
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        ids = tuple(str(i) for i in self.instance_ids)
        names = tuple(str(c) for c in self.class_names)
        labels = np.array(self.labels, dtype=np.uint8, copy=True)
        raw = np.asarray(self.labels)
        if raw.ndim != 2:
            raise InvalidInputError(f"labels must be a 2-D matrix, got {raw.ndim}-D")
        if not np.all((raw == 0) | (raw == 1)):
            raise InvalidInputError("labels must be binary")
        if labels.shape != (len(ids), len(names)):
            raise InvalidInputError(
                f"labels shape {labels.shape} does not match {len(ids)} ids x {len(names)} classes")
        if len(set(ids)) != len(ids):
            raise InvalidInputError("instance ids are not unique")
        if len(set(names)) != len(names) or any(not n for n in names):
            raise InvalidInputError("class names must be unique and non-empty")
        object.__setattr__(self, "instance_ids", ids)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "labels", _readonly(labels))
        if self.group_keys is not None:
            groups = tuple(str(g) for g in self.group_keys)
            if len(groups) != len(ids):
                raise InvalidInputError("group_keys length does not match number of instances")
            object.__setattr__(self, "group_keys", groups)
        if self.features is not None:
            feats = np.array(self.features, dtype=np.float64, copy=True)
            if feats.ndim != 2 or feats.shape[0] != len(ids):
                raise InvalidInputError("features must be an (N, D) matrix aligned with the ids")
            object.__setattr__(self, "features", _readonly(feats))

    def __len__(self):
        return len(self.instance_ids)

    @property
    def n_classes(self):
        return len(self.class_names)

    def __eq__(self, other):
        if not isinstance(other, LabelDataset):
            return NotImplemented
        if (self.instance_ids, self.class_names, self.group_keys) != (
                other.instance_ids, other.class_names, other.group_keys):
            return False
        if not np.array_equal(self.labels, other.labels):
            return False
        if (self.features is None) != (other.features is None):
            return False
        return self.features is None or np.array_equal(self.features, other.features)

    def subset(self, indices):
        idx = np.asarray(indices, dtype=np.int64)
        return LabelDataset(
            [self.instance_ids[i] for i in idx],
            self.labels[idx],
            self.class_names,
            None if self.group_keys is None else [self.group_keys[i] for i in idx],
            None if self.features is None else self.features[idx],
        )


# --------------------------------------------------------------------- I/O

def _infer_format(path, fmt):
    if fmt is not None:
        if fmt not in ("csv", "jsonl"):
            raise InvalidConfigError(f"unknown dataset format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    raise InvalidConfigError(f"cannot infer dataset format from {path}; pass format explicitly")


def features_sidecar(path):
    p = Path(path)
    return p.with_name(p.stem + ".features.csv")


def _parse_bit(cell, path, line, column):
    if cell not in ("0", "1"):
        raise ParseError(f"non-binary label value {cell!r} in column {column!r}", path, line)
    return int(cell)


def _load_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", path, 1) from None
        if not header or header[0] != "id":
            raise ParseError("first header column must be 'id'", path, 1)
        has_group = len(header) > 1 and header[1] == "group"
        names = header[2:] if has_group else header[1:]
        if any(not n for n in names):
            raise ParseError("empty class column name", path, 1)
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise ParseError(f"duplicate class columns {sorted(dup)}", path, 1)
        if "group" in names or "id" in names:
            raise ParseError("unknown column placement: 'id'/'group' must lead the header", path, 1)
        ids, groups, rows, seen = [], [], [], set()
        start = 2 if has_group else 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
            if row[0] in seen:
                raise ParseError(f"duplicate id {row[0]!r}", path, lineno)
            seen.add(row[0])
            ids.append(row[0])
            if has_group:
                groups.append(row[1])
            rows.append([_parse_bit(c, path, lineno, names[k]) for k, c in enumerate(row[start:])])
    labels = np.array(rows, dtype=np.uint8).reshape(len(ids), len(names))
    features = None
    side = features_sidecar(path)
    if side.exists():
        features = _load_features(side, ids)
    return LabelDataset(ids, labels, names, groups if has_group else None, features)


def _load_features(path, ids):
    by_id = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise ParseError("feature sidecar must start with an 'id' column", path, 1)
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise ParseError(f"expected {width + 1} fields, got {len(row)}", path, lineno)
            if row[0] in by_id:
                raise ParseError(f"duplicate id {row[0]!r}", path, lineno)
            try:
                by_id[row[0]] = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
    missing = [i for i in ids if i not in by_id]
    if missing or len(by_id) != len(ids):
        raise ParseError(f"feature ids do not match label ids (missing e.g. {missing[:3]})", path)
    return np.array([by_id[i] for i in ids], dtype=np.float64).reshape(len(ids), width)


def _load_jsonl(path, class_names=None):
    names = list(class_names) if class_names is not None else None
    fixed = names is not None
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", path, lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("each line must be a JSON object", path, lineno)
            if "id" not in obj and "class_names" in obj and not records:
                if set(obj) != {"class_names"}:
                    raise ParseError(f"unknown keys {sorted(set(obj) - {'class_names'})}", path, lineno)
                names = [str(c) for c in obj["class_names"]]
                fixed = True
                continue
            unknown = set(obj) - {"id", "group", "labels", "features"}
            if unknown:
                raise ParseError(f"unknown keys {sorted(unknown)}", path, lineno)
            if "id" not in obj:
                raise ParseError("missing 'id'", path, lineno)
            records.append((lineno, obj))
    if names is None:
        names = []
    index = {n: k for k, n in enumerate(names)}
    for lineno, obj in records:
        for lab in obj.get("labels") or []:
            if lab not in index:
                if fixed:
                    raise ParseError(f"label {lab!r} is not a known class", path, lineno)
                index[lab] = len(names)
                names.append(lab)
    ids, groups, feats, seen = [], [], [], set()
    labels = np.zeros((len(records), len(names)), dtype=np.uint8)
    has_group = any("group" in o for _, o in records)
    has_feat = any("features" in o for _, o in records)
    for i, (lineno, obj) in enumerate(records):
        rid = str(obj["id"])
        if rid in seen:
            raise ParseError(f"duplicate id {rid!r}", path, lineno)
        seen.add(rid)
        ids.append(rid)
        for lab in obj.get("labels") or []:
            labels[i, index[lab]] = 1
        if has_group:
            if "group" not in obj:
                raise ParseError("missing 'group' (other records carry one)", path, lineno)
            groups.append(str(obj["group"]))
        if has_feat:
            if "features" not in obj:
                raise ParseError("missing 'features' (other records carry them)", path, lineno)
            feats.append(obj["features"])
    features = None
    if has_feat:
        widths = {len(f) for f in feats}
        if len(widths) > 1:
            raise ParseError("feature vectors have inconsistent lengths", path)
        features = np.array(feats, dtype=np.float64).reshape(len(ids), widths.pop() if widths else 0)
    return LabelDataset(ids, labels, names, groups if has_group else None, features)


def load_dataset(path, format=None, class_names=None):
    """Read a dataset from CSV (plus optional feature sidecar) or JSONL."""
    fmt = _infer_format(path, format)
    if not Path(path).exists():
        raise InvalidInputError(f"dataset file not found: {path}")
    if fmt == "csv":
        return _load_csv(path)
    return _load_jsonl(path, class_names)


def _num(v):
    return repr(float(v))


def save_dataset(dataset, path, format=None):
    """Write ``dataset``; returns the list of files written."""
    fmt = _infer_format(path, format)
    path = Path(path)
    written = [path]
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["id"] + (["group"] if dataset.group_keys is not None else []) + list(dataset.class_names)
            w.writerow(head)
            for i, rid in enumerate(dataset.instance_ids):
                row = [rid]
                if dataset.group_keys is not None:
                    row.append(dataset.group_keys[i])
                row.extend(str(int(v)) for v in dataset.labels[i])
                w.writerow(row)
        if dataset.features is not None:
            side = features_sidecar(path)
            with open(side, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["id"] + [f"f{k}" for k in range(dataset.features.shape[1])])
                for rid, row in zip(dataset.instance_ids, dataset.features):
                    w.writerow([rid] + [_num(v) for v in row])
            written.append(side)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"class_names": list(dataset.class_names)}) + "\n")
            for i, rid in enumerate(dataset.instance_ids):
                obj = {"id": rid}
                if dataset.group_keys is not None:
                    obj["group"] = dataset.group_keys[i]
                present = [dataset.class_names[j] for j in np.flatnonzero(dataset.labels[i])]
                if present:
                    obj["labels"] = present
                if dataset.features is not None:
                    obj["features"] = [float(v) for v in dataset.features[i]]
                fh.write(json.dumps(obj) + "\n")
    return written


# -------------------------------------------------------------- statistics

@dataclass
class DatasetStats:
    n_instances: int
    per_class: dict
    n_any_class: int
    n_negative: int
    negative_fraction: float
    cardinality_histogram: dict

    def to_dict(self):
        return {
            "n_instances": self.n_instances,
            "per_class": dict(self.per_class),
            "n_any_class": self.n_any_class,
            "n_negative": self.n_negative,
            "negative_fraction": self.negative_fraction,
            "cardinality_histogram": {str(k): v for k, v in self.cardinality_histogram.items()},
        }


def dataset_stats(dataset):
    n = len(dataset)
    if n == 0:
        raise InvalidInputError("statistics of an empty dataset are undefined")
    card = dataset.labels.sum(axis=1).astype(np.int64)
    n_neg = int(np.sum(card == 0))
    values, counts = np.unique(card, return_counts=True)
    return DatasetStats(
        n_instances=n,
        per_class={c: int(v) for c, v in zip(dataset.class_names, dataset.labels.sum(axis=0))},
        n_any_class=n - n_neg,
        n_negative=n_neg,
        negative_fraction=n_neg / n,
        cardinality_histogram={int(k): int(c) for k, c in zip(values, counts)},
    )


def co_occurrence(dataset, grouping=None):
    """Symmetric pairwise co-occurrence counts with a zero diagonal.

    With ``grouping`` (class name -> category) the counts are per category:
    an instance counts for (A, B) when some class of A and some class of B
    are both present.  Categories are sorted by name.  Returns
    ``(matrix, names)``.
    """
    labels = dataset.labels.astype(np.int64)
    if grouping is None:
        names = list(dataset.class_names)
        presence = labels
    else:
        missing = [c for c in dataset.class_names if c not in grouping]
        if missing:
            raise InvalidConfigError(f"grouping does not cover classes {missing}")
        names = sorted({str(grouping[c]) for c in dataset.class_names})
        col = {n: k for k, n in enumerate(names)}
        member = np.zeros((dataset.n_classes, len(names)), dtype=np.int64)
        for j, c in enumerate(dataset.class_names):
            member[j, col[str(grouping[c])]] = 1
        presence = ((labels @ member) > 0).astype(np.int64)
    matrix = presence.T @ presence
    np.fill_diagonal(matrix, 0)
    return matrix, names


# ----------------------------------------------------------- filtering

@dataclass
class FilterReport:
    removed: list
    n_classes: int
    n_negative_before: int
    n_negative: int
    negative_fraction: float

    def to_dict(self):
        return dict(vars(self))


def filter_classes(dataset, remove):
    """Drop the named class columns; rows left without labels become negatives."""
    remove = list(remove)
    unknown = [c for c in remove if c not in dataset.class_names]
    if unknown:
        raise InvalidInputError(f"unknown classes {unknown}")
    drop = set(remove)
    keep = [j for j, c in enumerate(dataset.class_names) if c not in drop]
    if not keep:
        raise InvalidInputError("filtering would remove every class")
    before = int(np.sum(~dataset.labels.any(axis=1)))
    out = LabelDataset(
        dataset.instance_ids,
        dataset.labels[:, keep],
        [dataset.class_names[j] for j in keep],
        dataset.group_keys,
        dataset.features,
    )
    n_neg = int(np.sum(~out.labels.any(axis=1)))
    report = FilterReport([c for c in dataset.class_names if c in drop], out.n_classes,
                          before, n_neg, n_neg / len(out))
    return out, report


def retain_classes(dataset, keep):
    """Like ``filter_classes`` but naming the classes to keep."""
    keep = list(keep)
    unknown = [c for c in keep if c not in dataset.class_names]
    if unknown:
        raise InvalidInputError(f"unknown classes {unknown}")
    kept = set(keep)
    return filter_classes(dataset, [c for c in dataset.class_names if c not in kept])


# ----------------------------------------------------------- splitting

@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple = (0.7, 0.15, 0.15)
    seed: int = 0
    group_aware: bool = False

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3:
            raise InvalidConfigError("exactly three split fractions are required")
        if any(f <= 0 for f in fr):
            raise InvalidConfigError("every split fraction must be positive")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise InvalidConfigError(f"split fractions must sum to 1, got {sum(fr)}")
        object.__setattr__(self, "fractions", fr)


def split_dataset(dataset, spec=SplitSpec()):
    """Partition into (train, val, test); whole groups stay together when group_aware."""
    n = len(dataset)
    rng = np.random.default_rng(spec.seed)
    if spec.group_aware:
        if dataset.group_keys is None:
            raise InvalidConfigError("group-aware split requested but the dataset has no group keys")
        keys = sorted(set(dataset.group_keys))
        members = {k: [] for k in keys}
        for i, g in enumerate(dataset.group_keys):
            members[g].append(i)
        order = [keys[i] for i in rng.permutation(len(keys))]
        order.sort(key=lambda k: -len(members[k]))
        targets = [f * n for f in spec.fractions]
        filled = [0, 0, 0]
        parts = [[], [], []]
        for k in order:
            deficits = [t - f for t, f in zip(targets, filled)]
            s = int(np.argmax(deficits))
            parts[s].extend(members[k])
            filled[s] += len(members[k])
    else:
        perm = rng.permutation(n)
        n_train = int(round(spec.fractions[0] * n))
        n_val = int(round(spec.fractions[1] * n))
        parts = [perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]]
    return tuple(dataset.subset(sorted(int(i) for i in p)) for p in parts)


# ----------------------------------------------------------- synthesis

@dataclass(frozen=True)
class SyntheticConfig:
    n_instances: int = 5000
    n_classes: int = 8
    n_features: int = 16
    negative_fraction: float = 0.5
    label_cardinality_mean: float = 1.5
    class_skew: float = 1.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_instances < 1 or self.n_classes < 1 or self.n_features < 1:
            raise InvalidConfigError("n_instances, n_classes and n_features must be >= 1")
        if not (0.0 <= self.negative_fraction <= 1.0):
            raise InvalidConfigError(f"negative_fraction must lie in [0, 1], got {self.negative_fraction}")
        if not (self.label_cardinality_mean > 0 and math.isfinite(self.label_cardinality_mean)):
            raise InvalidConfigError("label_cardinality_mean must be positive")
        if not (self.class_skew >= 0 and math.isfinite(self.class_skew)):
            raise InvalidConfigError("class_skew must be non-negative")
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise InvalidConfigError("noise_sigma must be non-negative")

    def to_dict(self):
        return dict(vars(self))


def class_marginals(n_classes, skew):
    """Power-law class selection probabilities, rank r weighted by r**-skew."""
    w = np.arange(1, n_classes + 1, dtype=np.float64) ** -float(skew)
    return w / w.sum()


def _truncated_poisson(rng, mean, upper, size):
    out = np.empty(size, dtype=np.int64)
    pending = np.arange(size)
    # 1 <= k <= upper by rejection; acceptance is at least 1 - exp(-mean)
    while pending.size:
        draw = rng.poisson(mean, size=pending.size)
        ok = (draw >= 1) & (draw <= upper)
        out[pending[ok]] = draw[ok]
        pending = pending[~ok]
    return out


def synthesize(config=SyntheticConfig()):
    """Prototype-mixture dataset with features.

    Each class has a random prototype vector; a positive instance's features
    are the mean of its classes' prototypes plus Gaussian noise, a negative
    instance's are a background prototype plus noise.  Exactly
    ``round(negative_fraction * n_instances)`` rows are negative.
    """
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    m, d, n = cfg.n_classes, cfg.n_features, cfg.n_instances
    prototypes = rng.normal(size=(m, d))
    background = rng.normal(size=d)
    n_neg = int(round(cfg.negative_fraction * n))
    is_neg = np.zeros(n, dtype=bool)
    is_neg[rng.permutation(n)[:n_neg]] = True
    pos_idx = np.flatnonzero(~is_neg)

    marg = class_marginals(m, cfg.class_skew)
    cards = _truncated_poisson(rng, cfg.label_cardinality_mean, m, pos_idx.size)
    labels = np.zeros((n, m), dtype=np.uint8)
    for i, k in zip(pos_idx, cards):
        labels[i, rng.choice(m, size=int(k), replace=False, p=marg)] = 1

    counts = labels.sum(axis=1, keepdims=True).astype(np.float64)
    centres = np.where(counts > 0, (labels @ prototypes) / np.maximum(counts, 1.0), background)
    features = centres + cfg.noise_sigma * rng.normal(size=(n, d))
    width = len(str(n - 1))
    ids = [f"s{i:0{width}d}" for i in range(n)]
    names = [f"c{j}" for j in range(m)]
    return LabelDataset(ids, labels, names, None, features)
