# Class-balancing weights from label counts, with the all-negative rows
# treated as one more category.
import numpy as np

from anyclass import LossConfig, compute_loss, count_labels, effective_weights
from anyclass.balance import instance_scale

rng = np.random.default_rng(0)
labels = np.zeros((1000, 5), dtype=int)
freq = [0.40, 0.15, 0.05, 0.02, 0.01]
for j, f in enumerate(freq):
    labels[:, j] = rng.random(1000) < f
labels[rng.random(1000) < 0.5] = 0

counts = count_labels(labels)
print("per-class counts:", counts.per_class.tolist(), " negatives:", counts.negative)

for beta in (0.0, 0.9, 0.99, 0.9999):
    w = effective_weights(counts, beta)
    print(f"beta={beta:<7} weights {np.round(w.per_class, 3)}  negative {w.negative:.3f}"
          f"  sum {w.per_class.sum() + w.negative:.6f}")

# rarer classes get bigger weights; a row's scale is the sum over its labels
w = effective_weights(counts, 0.9999)
rows = np.array([[1, 0, 0, 0, 0], [0, 0, 0, 1, 1], [0, 0, 0, 0, 0]])
print("row scales:", np.round(instance_scale(rows, w), 3))

logits = rng.normal(size=(3, 5))
plain = compute_loss(logits, rows, LossConfig("any_bce"))
balanced = compute_loss(logits, rows, LossConfig("any_bce", balance=w))
print("per-row loss, plain    :", np.round(plain.per_instance, 4))
print("per-row loss, balanced :", np.round(balanced.per_instance, 4))

print(w.to_json())
