"""Small multilayer perceptron trained with hand-written backprop through the
losses in :mod:`anyclass.losses`, plus the lambda ablation harness."""

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .balance import DEFAULT_BETA, count_labels, effective_weights
from .errors import InvalidConfigError, InvalidInputError, TrainingDivergedError
from .losses import LossConfig, compute_loss
from .metrics import DEFAULT_THRESHOLD, full_report
from .numerics import _sigmoid
from .seeding import derive_seed

CHECKPOINT_FORMAT_VERSION = 1
LOG_FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "tanh")
DEFAULT_LAMBDA_GRID = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int
    output_dim: int
    hidden_dims: tuple = ()
    activation: str = "relu"
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise InvalidConfigError("all layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise InvalidConfigError(f"activation must be one of {ACTIVATIONS}")

    @property
    def layer_sizes(self):
        return (self.input_dim, *self.hidden_dims, self.output_dim)


class MLP:
    """Fully connected network; weights are stored as (fan_in, fan_out)."""

    def __init__(self, weights, biases, activation="relu"):
        if len(weights) != len(biases) or not weights:
            raise InvalidConfigError("need one bias per weight matrix")
        if activation not in ACTIVATIONS:
            raise InvalidConfigError(f"activation must be one of {ACTIVATIONS}")
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        self.activation = activation
        for a, b in zip(self.weights, self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise InvalidConfigError("consecutive layer shapes do not chain")
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise InvalidConfigError("bias length must equal layer output width")

    @property
    def input_dim(self):
        return self.weights[0].shape[0]

    @property
    def output_dim(self):
        return self.weights[-1].shape[1]

    @property
    def n_parameters(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self):
        """Parameter arrays in the order W0, b0, W1, b1, ... (live references)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self):
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def _act(self, x):
        return np.maximum(x, 0.0) if self.activation == "relu" else np.tanh(x)

    def forward(self, features, cache=False):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise InvalidInputError(f"expected features of width {self.input_dim}, got shape {x.shape}")
        acts = [x]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if k < len(self.weights) - 1:
                x = self._act(x)
            acts.append(x)
        return (x, acts) if cache else x

    def backward(self, grad_logits, acts):
        """Gradients (same order as ``parameters()``) given dLoss/dlogits."""
        delta = np.asarray(grad_logits, dtype=np.float64)
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            grads[2 * k] = acts[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            if k > 0:
                delta = delta @ self.weights[k].T
                a = acts[k]
                delta = delta * ((a > 0) if self.activation == "relu" else (1.0 - a * a))
        return grads

    def to_dict(self, class_names=None):
        d = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "mlp",
            "activation": self.activation,
            "layers": [
                {"shape": list(w.shape), "weight": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }
        if class_names is not None:
            d["class_names"] = list(class_names)
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != CHECKPOINT_FORMAT_VERSION or d.get("kind") != "mlp":
            raise InvalidInputError("unsupported checkpoint format")
        try:
            ws = [np.array(l["weight"], dtype=np.float64).reshape(l["shape"]) for l in d["layers"]]
            bs = [np.array(l["bias"], dtype=np.float64) for l in d["layers"]]
        except (KeyError, ValueError) as exc:
            raise InvalidInputError(f"malformed checkpoint: {exc}") from None
        return cls(ws, bs, d.get("activation", "relu"))

    def save(self, path, class_names=None):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(class_names), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def init_model(config):
    """Glorot-uniform weights, zero biases, fully determined by ``config.init_seed``."""
    rng = np.random.default_rng(config.init_seed)
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLP(weights, biases, config.activation)


def forward(model, features):
    return model.forward(features)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay: tuple = ((10, 0.1), (15, 0.1))
    loss: LossConfig = LossConfig()
    cb_beta: Optional[float] = DEFAULT_BETA
    cb_negative: bool = True
    validation_metric: str = "map"
    tau: float = DEFAULT_THRESHOLD
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lr_decay", tuple((int(e), float(f)) for e, f in self.lr_decay))
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfigError("epochs and batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise InvalidConfigError("learning_rate must be non-negative")
        if not (0.0 <= self.momentum < 1.0):
            raise InvalidConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise InvalidConfigError("weight_decay must be non-negative")
        epochs = [e for e, _ in self.lr_decay]
        if any(b <= a for a, b in zip(epochs, epochs[1:])) or any(e < 0 or e >= self.epochs for e in epochs):
            raise InvalidConfigError("decay epochs must be strictly increasing and < epochs")
        if self.validation_metric not in ("map", "macro_f2"):
            raise InvalidConfigError("validation_metric must be 'map' or 'macro_f2'")
        if self.cb_beta is not None and not (0.0 <= self.cb_beta < 1.0):
            raise InvalidConfigError("cb_beta must lie in [0, 1)")
        if self.threads < 1:
            raise InvalidConfigError("threads must be >= 1")

    def learning_rate_at(self, epoch):
        lr = self.learning_rate
        for e, f in self.lr_decay:
            if epoch >= e:
                lr *= f
        return lr

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "loss"}
        d["lr_decay"] = [list(p) for p in self.lr_decay]
        d["loss"] = self.loss.to_dict()
        return d


@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    train_loss: float
    validation: object  # MetricsReport

    def metric(self, name):
        v = self.validation.mean_ap if name == "map" else self.validation.macro_f2
        return -math.inf if v is None or math.isnan(v) else v


@dataclass
class TrainingLog:
    config: dict
    epochs: list = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_metric: Optional[float] = None
    best_model: Optional[MLP] = None
    balance: Optional[dict] = None
    complete: bool = False

    CSV_COLUMNS = ("epoch", "learning_rate", "train_loss", "val_map", "val_macro_f1",
                   "val_macro_f2", "val_f1_neg")

    def to_dict(self):
        return {
            "format_version": LOG_FORMAT_VERSION,
            "complete": self.complete,
            "balance": self.balance,
            "best_epoch": self.best_epoch,
            "best_metric": self.best_metric,
            "epochs": [
                {"epoch": r.epoch, "learning_rate": r.learning_rate, "train_loss": r.train_loss,
                 "validation": {k: v for k, v in r.validation.to_dict().items() if k != "per_class"}}
                for r in self.epochs
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.epochs:
            v = r.validation
            w.writerow([r.epoch, repr(r.learning_rate), repr(r.train_loss), repr(v.mean_ap),
                        repr(v.macro_f1), repr(v.macro_f2), repr(v.f1_neg)])
        return buf.getvalue()


def _require_features(data, name):
    if data.features is None:
        raise InvalidInputError(f"{name} dataset has no features")


def _max_abs(a):
    a = np.abs(a)
    return float(np.max(np.where(np.isnan(a), np.inf, a)))


def balance_for(train_data, config):
    """Class-balance weights from the training split, or None when disabled."""
    if config.cb_beta is None:
        return None
    counts = count_labels(train_data)
    include_neg = config.cb_negative and counts.negative > 0
    return effective_weights(counts, config.cb_beta, include_negative=include_neg)


def train(model, train_data, val_data, config=TrainConfig(), on_epoch: Optional[Callable] = None):
    """Minibatch SGD with momentum and weight decay; keeps the best-validating weights.

    ``model`` is updated in place.  ``on_epoch(log)`` is called after every
    epoch, which lets callers persist partial logs.
    """
    _require_features(train_data, "training")
    _require_features(val_data, "validation")
    if train_data.n_classes != model.output_dim or val_data.n_classes != model.output_dim:
        raise InvalidInputError("model output width does not match the number of classes")
    balance = balance_for(train_data, config)
    loss_cfg = config.loss.with_balance(balance)
    x = train_data.features
    y = train_data.labels
    n = len(train_data)
    rng = np.random.default_rng(derive_seed(config.seed, "shuffle"))
    params = model.parameters()
    velocity = [np.zeros_like(p) for p in params]
    log = TrainingLog(config=config.to_dict(), balance=None if balance is None else balance.to_dict())

    for epoch in range(config.epochs):
        lr = config.learning_rate_at(epoch)
        order = rng.permutation(n)
        batch_losses = []
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                logits, acts = model.forward(x[idx], cache=True)
            if not np.all(np.isfinite(logits)):
                raise TrainingDivergedError(epoch, b, _max_abs(logits))
            res = compute_loss(logits, y[idx], loss_cfg, threads=config.threads)
            if not math.isfinite(res.total):
                raise TrainingDivergedError(epoch, b, _max_abs(logits))
            batch_losses.append(res.total * len(idx))
            grads = model.backward(res.grad_logits / len(idx), acts)
            for p, g, v in zip(params, grads, velocity):
                if config.weight_decay:
                    g = g + config.weight_decay * p
                v *= config.momentum
                v += g
                p -= lr * v
        report = evaluate(model, val_data, config.tau)
        rec = EpochRecord(epoch, lr, math.fsum(batch_losses) / n, report)
        log.epochs.append(rec)
        score = rec.metric(config.validation_metric)
        if log.best_epoch is None or score > log.best_metric:
            log.best_epoch, log.best_metric, log.best_model = epoch, score, model.copy()
        if on_epoch is not None:
            on_epoch(log)
    log.complete = True
    return log


def predict_proba(model, features):
    return _sigmoid(model.forward(features))


def evaluate(model, data, tau=DEFAULT_THRESHOLD, ciw=None):
    _require_features(data, "evaluation")
    if data.n_classes != model.output_dim:
        raise InvalidInputError(
            f"model predicts {model.output_dim} classes but the dataset has {data.n_classes}")
    return full_report(predict_proba(model, data.features), data.labels, tau, ciw, data.class_names)


# ----------------------------------------------------------------- experiments

@dataclass
class RunResult:
    seed: int
    log: TrainingLog
    test: object  # MetricsReport


def run_experiment(train_data, val_data, test_data, mlp_config, train_config, seed):
    """Init, train and test one model; init and shuffling seeds derive from ``seed``."""
    mcfg = replace(mlp_config, init_seed=derive_seed(seed, "init"))
    tcfg = replace(train_config, seed=derive_seed(seed, "train"))
    model = init_model(mcfg)
    log = train(model, train_data, val_data, tcfg)
    return RunResult(seed, log, evaluate(log.best_model, test_data, tcfg.tau))


ABLATION_COLUMNS = ("variant", "lambda", "seed", "f1", "f2", "map", "f1_neg")


@dataclass
class AblationRow:
    variant: str  # "baseline" (standard loss) or "any"
    lam: Optional[float]
    seed: int
    f1: float
    f2: float
    map: float
    f1_neg: float

    def as_list(self):
        return [self.variant, "" if self.lam is None else repr(self.lam), self.seed,
                repr(self.f1), repr(self.f2), repr(self.map), repr(self.f1_neg)]


@dataclass
class AblationTable:
    rows: list
    family: str

    def medians(self):
        """Per-(variant, lambda) medians, baseline first then lambdas in grid order."""
        keys = []
        for r in self.rows:
            if (r.variant, r.lam) not in keys:
                keys.append((r.variant, r.lam))
        out = []
        for variant, lam in keys:
            sel = [r for r in self.rows if r.variant == variant and r.lam == lam]
            out.append(AblationRow(variant, lam, len(sel),
                                   *(statistics.median(getattr(r, k) for r in sel)
                                     for k in ("f1", "f2", "map", "f1_neg"))))
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ABLATION_COLUMNS)
        for r in self.rows:
            w.writerow(r.as_list())
        return buf.getvalue()

    def medians_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("variant", "lambda", "n_seeds", "f1", "f2", "map", "f1_neg"))
        for r in self.medians():
            w.writerow(r.as_list())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, family=""):
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            rows.append(AblationRow(rec["variant"], float(rec["lambda"]) if rec["lambda"] else None,
                                    int(rec["seed"]), float(rec["f1"]), float(rec["f2"]),
                                    float(rec["map"]), float(rec["f1_neg"])))
        return cls(rows, family)


def ablate_lambda(train_data, val_data, test_data, mlp_config, base_config,
                  lambda_grid=DEFAULT_LAMBDA_GRID, seeds=5):
    """Train the standard loss and the any-class loss at every lambda, for every seed.

    ``seeds`` is a count (seeds 0..k-1) or an explicit sequence.  The base
    family is taken from ``base_config.loss`` (``bce`` and ``any_bce`` both
    select the BCE pair); alpha and gamma carry over to the any-class rows.
    """
    grid = [float(l) for l in lambda_grid]
    if not grid or any(not (0.0 <= l <= 1.0) for l in grid):
        raise InvalidConfigError("lambda grid values must lie in [0, 1]")
    seed_list = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    loss = base_config.loss
    base = loss.base_family
    rows = []

    def record(variant, lam, seed, cfg):
        rep = run_experiment(train_data, val_data, test_data, mlp_config, cfg, seed).test
        rows.append(AblationRow(variant, lam, seed, rep.macro_f1, rep.macro_f2, rep.mean_ap, rep.f1_neg))

    for seed in seed_list:
        record("baseline", None, seed, replace(base_config, loss=replace(loss, family=base)))
        for lam in grid:
            cfg = replace(base_config, loss=replace(loss, family="any_" + base, lam=lam))
            record("any", lam, seed, cfg)
    return AblationTable(rows, base)
