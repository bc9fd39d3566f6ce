"""Multi-label metrics on a small scored batch, including F1 on the
"nothing present" task and a class-importance-weighted F2."""
import numpy as np

from anyclass import full_report

scores = np.array([
    [0.91, 0.10, 0.05],
    [0.20, 0.15, 0.30],
    [0.55, 0.70, 0.10],
    [0.05, 0.40, 0.80],
    [0.35, 0.05, 0.45],
    [0.60, 0.02, 0.01],
])
targets = np.array([
    [1, 0, 0],
    [0, 0, 0],
    [1, 1, 0],
    [0, 0, 1],
    [0, 0, 0],
    [0, 0, 0],
])

report = full_report(scores, targets, tau=0.5, ciw=[1.0, 2.0, 0.5], class_names=["crack", "root", "joint"])
for c in report.per_class:
    print(f"{c.name:>6s}  P {c.precision:.3f}  R {c.recall:.3f}  F1 {c.f1:.3f}  F2 {c.f2:.3f}  AP {c.average_precision:.3f}")
for k, v in report.scalars().items():
    print(f"{k:>18s}  {v:.4f}")

# lower threshold: more recall, so F2 tends to rise while F1-Neg pays for it
for tau in (0.3, 0.5, 0.7):
    r = full_report(scores, targets, tau=tau)
    print(f"tau={tau}: macro F2 {r.macro_f2:.3f}, F1-Neg {r.f1_neg:.3f}")

print(report.to_csv(per_class=True))
