"""Train a small MLP with each loss family on synthetic data with 50%
negatives, then sweep lambda. Takes about fifteen seconds."""
import statistics

from anyclass import LossConfig, MLPConfig, SplitSpec, SyntheticConfig, TrainConfig, split_dataset, synthesize
from anyclass.trainer import ablate_lambda, run_experiment

data = synthesize(SyntheticConfig(n_instances=10_000, n_classes=8, negative_fraction=0.5, seed=0))
train, val, test = split_dataset(data, SplitSpec(seed=0))
model = MLPConfig(input_dim=16, output_dim=8, hidden_dims=(32,))

print("family      median F2   median F1-Neg   (3 seeds)")
for family in ("bce", "any_bce", "focal", "any_focal"):
    runs = [run_experiment(train, val, test, model, TrainConfig(loss=LossConfig(family)), s) for s in range(3)]
    f2 = statistics.median(r.test.macro_f2 for r in runs)
    neg = statistics.median(r.test.f1_neg for r in runs)
    print(f"{family:<10s}  {f2:.4f}      {neg:.4f}")

# one run's training curve
log = runs[0].log
for rec in log.epochs[::4]:
    print(f"epoch {rec.epoch:2d}  lr {rec.learning_rate:.4g}  loss {rec.train_loss:.4f}  "
          f"val mAP {rec.validation.mean_ap:.4f}")
print("best epoch:", log.best_epoch)

table = ablate_lambda(train, val, test, model, TrainConfig(loss=LossConfig("bce")),
                      lambda_grid=(0.0, 0.02, 0.2, 1.0), seeds=2)
print(table.medians_csv())
