"""
Dataset tooling
===============

Generate a synthetic label set, look at its co-occurrence structure, remove
a dominant class to create negatives, and split it by group.
"""
import tempfile
from pathlib import Path

import numpy as np

from anyclass import (LabelDataset, SplitSpec, SyntheticConfig, co_occurrence, dataset_stats,
                      filter_classes, load_dataset, save_dataset, split_dataset, synthesize)

ds = synthesize(SyntheticConfig(n_instances=2000, n_classes=6, negative_fraction=0.3,
                                label_cardinality_mean=2.0, seed=1))
stats = dataset_stats(ds)
print("instances:", stats.n_instances, " negative fraction:", stats.negative_fraction)
print("per-class counts:", stats.per_class)
print("labels per instance:", stats.cardinality_histogram)

matrix, names = co_occurrence(ds)
print("co-occurrence (diagonal left at zero):")
print("      " + " ".join(f"{n:>5s}" for n in names))
for n, row in zip(names, matrix):
    print(f"{n:>5s} " + " ".join(f"{v:5d}" for v in row))

# same counts, but per category
grouping = {"c0": "big", "c1": "big", "c2": "mid", "c3": "mid", "c4": "small", "c5": "small"}
cat_matrix, cats = co_occurrence(ds, grouping)
print(cats, cat_matrix.tolist())

# Dropping the most frequent class turns the rows that only had that label
# into negatives.
filtered, report = filter_classes(ds, ["c0"])
print(f"after removing c0: {report.n_classes} classes, negatives "
      f"{report.n_negative_before} -> {report.n_negative} ({report.negative_fraction:.3f})")

# a patient-style split: each group lands in exactly one partition
rng = np.random.default_rng(2)
grouped = LabelDataset(ds.instance_ids, ds.labels, ds.class_names,
                       group_keys=[f"p{int(g)}" for g in rng.integers(0, 150, len(ds))],
                       features=ds.features)
train, val, test = split_dataset(grouped, SplitSpec((0.7, 0.15, 0.15), seed=0, group_aware=True))
print("split sizes:", len(train), len(val), len(test))
print("groups shared between train and test:", set(train.group_keys) & set(test.group_keys))

with tempfile.TemporaryDirectory() as tmp:
    written = save_dataset(train, Path(tmp) / "train.csv")
    print("wrote", [Path(p).name for p in written])
    print("round trip identical:", load_dataset(Path(tmp) / "train.csv") == train)
