"""
Losses with an any-class term
=============================

Walks through the four loss families on a tiny batch and shows how the
any-class term reacts to negative instances.
"""
import numpy as np

from anyclass import LossConfig, any_class_logit, compute_loss, stable_sigmoid

# three instances, four classes; the middle row has no labels at all
logits = np.array([[2.0, -1.0, -3.0, 0.5],
                   [-2.5, -0.5, 1.5, -4.0],
                   [0.3, 0.2, -0.1, -2.0]])
targets = np.array([[1, 0, 0, 1],
                    [0, 0, 0, 0],
                    [1, 1, 0, 0]])

# p_a: the model's belief that *something* is present in each row
p_any = stable_sigmoid(any_class_logit(logits, targets, lam=0.02))
print("any-class probability per row:", np.round(p_any, 4))

for family in ("bce", "focal", "any_bce", "any_focal"):
    res = compute_loss(logits, targets, LossConfig(family))
    print(f"{family:>9s}  batch loss {res.total:.5f}  per row {np.round(res.per_instance, 4)}")

# The negative row gets a gradient push on every neuron that the plain BCE
# loss does not give it. The extra part is the same on all four neurons.
extra = (compute_loss(logits, targets, LossConfig("any_bce")).grad_logits
         - compute_loss(logits, targets, LossConfig("bce")).grad_logits)
print("extra gradient on the negative row:", np.round(extra[1], 6))

# alpha = 0 switches the any-class term off entirely
same = np.array_equal(compute_loss(logits, targets, LossConfig("any_bce", alpha=0.0)).grad_logits,
                      compute_loss(logits, targets, LossConfig("bce")).grad_logits)
print("alpha = 0 reproduces BCE exactly:", same)

# lambda only matters for rows that have labels
for lam in (0.0, 0.02, 0.5, 1.0):
    res = compute_loss(logits, targets, LossConfig("any_bce", lam=lam))
    print(f"lambda {lam:<4}  row losses {np.round(res.per_instance, 5)}")
