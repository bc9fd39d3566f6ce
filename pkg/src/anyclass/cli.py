"""Command-line entry point.

Every command writes into ``--out`` (a directory) and records a
``manifest.json`` there before doing any work.  The manifest holds the fully
resolved configuration and input digests, so ``anyclass rerun
<manifest>`` reproduces the outputs byte for byte.

Configuration precedence: command-line flags > ``--config`` JSON file >
built-in defaults.
"""

import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import (COCO_RETAINED_CLASSES, SplitSpec, SyntheticConfig, co_occurrence,
                   dataset_stats, features_sidecar, filter_classes, load_dataset,
                   retain_classes, save_dataset, split_dataset, synthesize)
from .errors import AnyClassError, InvalidConfigError, InvalidInputError
from .losses import FAMILIES, SURFACE_CASES, LossConfig, likelihood_surface_grid
from .seeding import derive_seed
from .trainer import (DEFAULT_LAMBDA_GRID, MLP, MLPConfig, TrainConfig, ablate_lambda,
                      evaluate, init_model, train)

MANIFEST_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 3
EXIT_INPUT = 4
EXIT_IO = 5
EXIT_DIVERGED = 6
EXIT_INTERRUPTED = 130

log = logging.getLogger("anyclass")

# ------------------------------------------------------------------ defaults

_MODEL_DEFAULTS = {
    "hidden": [32],
    "activation": "relu",
    "epochs": 20,
    "batch_size": 64,
    "lr": 0.05,
    "momentum": 0.9,
    "weight_decay": 1e-4,
    "lr_decay": [[10, 0.1], [15, 0.1]],
    "loss": "any_bce",
    "alpha": 1.0,
    "lambda": 0.02,
    "gamma": 2.0,
    "cb_beta": 0.9999,
    "cb_negative": True,
    "val_metric": "map",
    "tau": 0.5,
    "seed": 0,
    "threads": 1,
}

DEFAULTS = {
    "gen-data": {
        "classes": 8, "instances": 5000, "features": 16, "negative_fraction": 0.5,
        "cardinality": 1.5, "skew": 1.0, "noise": 1.0, "seed": 0, "format": "csv",
    },
    "train": {"train": None, "val": None, "test": None, **_MODEL_DEFAULTS},
    "eval": {"checkpoint": None, "data": None, "tau": 0.5, "ciw_file": None, "per_class": False},
    "ablate": {"train": None, "val": None, "test": None, **_MODEL_DEFAULTS,
               "loss": "bce", "lambdas": list(DEFAULT_LAMBDA_GRID), "seeds": 5},
    "cooc": {"data": None, "grouping": None},
    "filter": {"data": None, "remove": [], "keep": [], "coco_keep": False},
    "split": {"data": None, "fractions": [0.7, 0.15, 0.15], "group_key": None, "seed": 0},
    "surface": {"case": "any", "targets": [1, 1], "lambda": 0.05, "alpha": 1.0, "resolution": 101},
}

INPUT_KEYS = ("train", "val", "test", "data", "checkpoint", "ciw_file", "grouping")


# ------------------------------------------------------------------ helpers

def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_files(cfg):
    files = []
    for key in INPUT_KEYS:
        p = cfg.get(key)
        if p:
            files.append(Path(p))
            side = features_sidecar(p)
            if Path(p).suffix.lower() == ".csv" and side.exists():
                files.append(side)
    return files


def _now():
    return datetime.now(timezone.utc).isoformat()


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return Path(path)


def _write_json(path, obj):
    return _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


class Manifest:
    def __init__(self, command, cfg, out_dir):
        self.path = Path(out_dir) / MANIFEST_NAME
        self.record = {
            "format_version": MANIFEST_FORMAT_VERSION,
            "tool_version": __version__,
            "command": command,
            "config": cfg,
            "seeds": _seeds_for(command, cfg),
            "inputs": {str(p): _digest(p) for p in _input_files(cfg) if p.exists()},
            "outputs": {},
            "status": "running",
            "started": _now(),
            "finished": None,
        }
        self.flush()

    def flush(self):
        _write_json(self.path, self.record)

    def finish(self, outputs, status="complete", error=None):
        self.record["outputs"] = {p.name: _digest(p) for p in outputs if p.exists()}
        self.record["status"] = status
        self.record["finished"] = _now()
        if error is not None:
            self.record["error"] = error
        self.flush()


def _seeds_for(command, cfg):
    if "seed" not in cfg:
        return {}
    s = cfg["seed"]
    if command in ("train", "ablate"):
        return {"master": s, "init": derive_seed(s, "init"), "train": derive_seed(s, "train")}
    if command in ("gen-data", "split"):
        name = "data" if command == "gen-data" else "split"
        return {"master": s, name: derive_seed(s, name)}
    return {"master": s}


def _parse_decay(values):
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            out.append([int(v[0]), float(v[1])])
            continue
        try:
            e, f = str(v).split(":")
            out.append([int(e), float(f)])
        except ValueError:
            raise InvalidConfigError(f"bad --lr-decay entry {v!r}; expected EPOCH:FACTOR") from None
    return out


def _cb_beta(v):
    if v is None or (isinstance(v, str) and v.lower() == "none"):
        return None
    return float(v)


def _model_configs(cfg, train_data):
    if train_data.features is None:
        raise InvalidInputError("training dataset has no features (missing sidecar or 'features' field)")
    mcfg = MLPConfig(train_data.features.shape[1], train_data.n_classes, tuple(cfg["hidden"]),
                     cfg["activation"], derive_seed(cfg["seed"], "init"))
    loss = LossConfig(cfg["loss"], float(cfg["alpha"]), float(cfg["lambda"]), float(cfg["gamma"]))
    tcfg = TrainConfig(
        epochs=int(cfg["epochs"]), batch_size=int(cfg["batch_size"]), learning_rate=float(cfg["lr"]),
        momentum=float(cfg["momentum"]), weight_decay=float(cfg["weight_decay"]),
        lr_decay=tuple(tuple(p) for p in _parse_decay(cfg["lr_decay"])), loss=loss,
        cb_beta=_cb_beta(cfg["cb_beta"]), cb_negative=bool(cfg["cb_negative"]),
        validation_metric=cfg["val_metric"], tau=float(cfg["tau"]),
        seed=derive_seed(cfg["seed"], "train"), threads=int(cfg["threads"]),
    )
    return mcfg, tcfg


def _dataset_ext(path):
    return ".jsonl" if Path(path).suffix.lower() in (".jsonl", ".ndjson") else ".csv"


def _read_name_value_csv(path, key_col, value_col, what):
    p = Path(path)
    if not p.exists():
        raise InvalidInputError(f"{what} file not found: {p}")
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or key_col not in reader.fieldnames or value_col not in reader.fieldnames:
            raise InvalidInputError(f"{p}: {what} file needs header '{key_col},{value_col}'")
        return [(r[key_col], r[value_col]) for r in reader]


def read_ciw(path, class_names):
    pairs = _read_name_value_csv(path, "class", "weight", "CIW weight")
    table = {}
    for name, w in pairs:
        try:
            table[name] = float(w)
        except ValueError:
            raise InvalidInputError(f"{path}: weight for class {name!r} is not a number") from None
    unknown = sorted(set(table) - set(class_names))
    missing = [c for c in class_names if c not in table]
    if unknown or missing:
        raise InvalidInputError(f"{path}: CIW classes do not match dataset (unknown {unknown}, missing {missing})")
    return np.array([table[c] for c in class_names])


# ------------------------------------------------------------------ commands

def cmd_gen_data(cfg, out):
    sc = SyntheticConfig(
        n_instances=int(cfg["instances"]), n_classes=int(cfg["classes"]), n_features=int(cfg["features"]),
        negative_fraction=float(cfg["negative_fraction"]), label_cardinality_mean=float(cfg["cardinality"]),
        class_skew=float(cfg["skew"]), noise_sigma=float(cfg["noise"]),
        seed=derive_seed(cfg["seed"], "data"),
    )
    ds = synthesize(sc)
    fmt = cfg["format"]
    if fmt not in ("csv", "jsonl"):
        raise InvalidConfigError(f"unknown format {fmt!r}")
    files = save_dataset(ds, out / f"dataset.{fmt}", fmt)
    files.append(_write_json(out / "stats.json", dataset_stats(ds).to_dict()))
    return files


def cmd_train(cfg, out, state):
    for key in ("train", "val"):
        if not cfg.get(key):
            raise InvalidConfigError(f"--{key} is required")
    train_data = load_dataset(cfg["train"])
    val_data = load_dataset(cfg["val"])
    mcfg, tcfg = _model_configs(cfg, train_data)
    model = init_model(mcfg)
    log_json, log_csv = out / "log.json", out / "log.csv"
    state["outputs"] = [log_json, log_csv]

    def persist(tlog):
        _write_text(log_json, tlog.to_json() + "\n")
        _write_text(log_csv, tlog.to_csv())

    tlog = train(model, train_data, val_data, tcfg, on_epoch=persist)
    persist(tlog)
    files = [log_json, log_csv]
    ckpt = out / "model.json"
    tlog.best_model.save(ckpt, train_data.class_names)
    files.append(ckpt)
    if cfg.get("test"):
        rep = evaluate(tlog.best_model, load_dataset(cfg["test"]), tcfg.tau)
        files.append(_write_text(out / "test_report.json", rep.to_json() + "\n"))
    best = tlog.epochs[tlog.best_epoch].validation
    print(f"best epoch {tlog.best_epoch}: val mAP {best.mean_ap:.4f}, macro F2 {best.macro_f2:.4f}")
    return files


def _load_checkpoint(path):
    p = Path(path)
    if not p.exists():
        raise InvalidInputError(f"checkpoint not found: {p}")
    with open(p, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{p}: invalid checkpoint JSON ({exc.msg})") from None
    return MLP.from_dict(d), d.get("class_names")


def cmd_eval(cfg, out):
    if not cfg.get("checkpoint") or not cfg.get("data"):
        raise InvalidConfigError("--checkpoint and --data are required")
    model, names = _load_checkpoint(cfg["checkpoint"])
    data = load_dataset(cfg["data"])
    if data.features is None:
        raise InvalidInputError("evaluation dataset has no features")
    if data.features.shape[1] != model.input_dim or data.n_classes != model.output_dim:
        raise InvalidInputError(
            f"checkpoint expects {model.input_dim} features and {model.output_dim} classes; "
            f"dataset has {data.features.shape[1]} features and {data.n_classes} classes")
    if names is not None and tuple(names) != data.class_names:
        raise InvalidInputError("checkpoint class names differ from the dataset's")
    ciw = read_ciw(cfg["ciw_file"], data.class_names) if cfg.get("ciw_file") else None
    rep = evaluate(model, data, float(cfg["tau"]), ciw)
    files = [_write_text(out / "report.json", rep.to_json() + "\n"),
             _write_text(out / "report.csv", rep.to_csv(per_class=bool(cfg["per_class"])))]
    for k, v in rep.scalars().items():
        if v is not None:
            print(f"{k:>18s}  {v:.4f}")
    return files


def cmd_ablate(cfg, out):
    for key in ("train", "val", "test"):
        if not cfg.get(key):
            raise InvalidConfigError(f"--{key} is required")
    train_data = load_dataset(cfg["train"])
    mcfg, tcfg = _model_configs(cfg, train_data)
    table = ablate_lambda(train_data, load_dataset(cfg["val"]), load_dataset(cfg["test"]), mcfg, tcfg,
                          [float(l) for l in cfg["lambdas"]], int(cfg["seeds"]))
    files = [_write_text(out / "ablation.csv", table.to_csv()),
             _write_text(out / "medians.csv", table.medians_csv())]
    print(table.medians_csv(), end="")
    return files


def cmd_cooc(cfg, out):
    if not cfg.get("data"):
        raise InvalidConfigError("--data is required")
    data = load_dataset(cfg["data"])
    grouping = None
    if cfg.get("grouping"):
        grouping = dict(_read_name_value_csv(cfg["grouping"], "class", "category", "grouping"))
    matrix, names = co_occurrence(data, grouping)
    path = out / "cooc.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["category" if grouping else "class"] + names)
        for name, row in zip(names, matrix):
            w.writerow([name] + [int(v) for v in row])
    return [path]


def cmd_filter(cfg, out):
    if not cfg.get("data"):
        raise InvalidConfigError("--data is required")
    data = load_dataset(cfg["data"])
    keep = list(cfg.get("keep") or [])
    if cfg.get("coco_keep"):
        keep += [c for c in COCO_RETAINED_CLASSES if c not in keep]
    if keep and cfg.get("remove"):
        raise InvalidConfigError("use either --remove or --keep/--coco-keep, not both")
    if keep:
        filtered, report = retain_classes(data, keep)
    else:
        filtered, report = filter_classes(data, cfg.get("remove") or [])
    ext = _dataset_ext(cfg["data"])
    files = save_dataset(filtered, out / f"filtered{ext}")
    summary = {"filter": report.to_dict(), "stats": dataset_stats(filtered).to_dict()}
    files.append(_write_json(out / "filter_report.json", summary))
    print(f"{report.n_classes} classes remain; negative fraction {report.negative_fraction:.4f}")
    return files


def cmd_split(cfg, out):
    if not cfg.get("data"):
        raise InvalidConfigError("--data is required")
    data = load_dataset(cfg["data"])
    spec = SplitSpec(tuple(cfg["fractions"]), derive_seed(cfg["seed"], "split"),
                     cfg.get("group_key") is not None)
    parts = split_dataset(data, spec)
    ext = _dataset_ext(cfg["data"])
    files = []
    for name, part in zip(("train", "val", "test"), parts):
        files += save_dataset(part, out / f"{name}{ext}")
    files.append(_write_json(out / "split_stats.json",
                             {n: dataset_stats(p).to_dict() for n, p in zip(("train", "val", "test"), parts)}))
    return files


def cmd_surface(cfg, out):
    grid = likelihood_surface_grid(cfg["case"], tuple(int(t) for t in cfg["targets"]),
                                   float(cfg["lambda"]), int(cfg["resolution"]), float(cfg["alpha"]))
    path = out / "surface.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p1", "p2", "value"])
        for p1, p2, v in grid:
            w.writerow([repr(float(p1)), repr(float(p2)), repr(float(v))])
    return [path]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "cooc": cmd_cooc,
    "filter": cmd_filter,
    "split": cmd_split,
    "surface": cmd_surface,
}


def run_command(command, cfg, out_dir):
    """Execute ``command`` with a resolved config; returns the finished manifest record."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(command, cfg, out)
    state = {"outputs": []}
    fn = COMMANDS[command]
    try:
        files = fn(cfg, out, state) if command == "train" else fn(cfg, out)
    except BaseException as exc:
        status = "interrupted" if isinstance(exc, KeyboardInterrupt) else "failed"
        manifest.record["complete"] = False
        manifest.finish(state["outputs"], status="incomplete",
                        error={"kind": status, "code": getattr(exc, "code", type(exc).__name__),
                               "message": str(exc)})
        raise
    manifest.record["complete"] = True
    manifest.finish(files)
    return manifest.record


def rerun(manifest_path, out_dir=None, threads=None):
    """Re-execute the run recorded in a manifest, after checking input digests."""
    p = Path(manifest_path)
    if not p.exists():
        raise InvalidInputError(f"manifest not found: {p}")
    with open(p, encoding="utf-8") as fh:
        rec = json.load(fh)
    if rec.get("format_version") != MANIFEST_FORMAT_VERSION or rec.get("command") not in COMMANDS:
        raise InvalidInputError(f"{p}: not a recognised run manifest")
    for path, digest in rec.get("inputs", {}).items():
        if not Path(path).exists() or _digest(path) != digest:
            raise InvalidInputError(f"input {path} is missing or changed since the recorded run")
    cfg = dict(rec["config"])
    if threads is not None:
        cfg["threads"] = threads
    return run_command(rec["command"], cfg, out_dir if out_dir is not None else p.parent)


# ------------------------------------------------------------------ parsing

def _add_model_args(p):
    p.add_argument("--train", help="training dataset (CSV with feature sidecar, or JSONL)")
    p.add_argument("--val", help="validation dataset")
    p.add_argument("--test", help="test dataset")
    p.add_argument("--hidden", type=int, nargs="*", help="hidden layer widths (none for a linear model)")
    p.add_argument("--activation", choices=("relu", "tanh"))
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--lr-decay", nargs="*", metavar="EPOCH:FACTOR")
    p.add_argument("--loss", choices=FAMILIES)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--cb-beta", help="class-balance beta in [0,1), or 'none' to disable")
    p.add_argument("--no-cb-negative", dest="cb_negative", action="store_const", const=False,
                   help="do not give negative instances their own balancing weight")
    p.add_argument("--val-metric", choices=("map", "macro_f2"))
    p.add_argument("--tau", type=float)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--config", help="JSON file of option values (overridden by flags)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker threads for loss evaluation (default 1)")

    parser = argparse.ArgumentParser(prog="anyclass", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--classes", type=int)
    p.add_argument("--instances", type=int)
    p.add_argument("--features", type=int)
    p.add_argument("--negative-fraction", type=float)
    p.add_argument("--cardinality", type=float, help="mean labels per positive instance")
    p.add_argument("--skew", type=float, help="power-law exponent of class frequencies")
    p.add_argument("--noise", type=float, help="feature noise standard deviation")
    p.add_argument("--format", choices=("csv", "jsonl"))

    p = sub.add_parser("train", parents=[common], help="train an MLP")
    _add_model_args(p)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--tau", type=float)
    p.add_argument("--ciw-file", help="CSV with header class,weight")
    p.add_argument("--per-class", action="store_const", const=True)

    p = sub.add_parser("ablate", parents=[common], help="lambda ablation against the standard loss")
    _add_model_args(p)
    p.add_argument("--lambdas", type=float, nargs="+")
    p.add_argument("--seeds", type=int, help="number of seeds per configuration")

    p = sub.add_parser("cooc", parents=[common], help="label co-occurrence matrix")
    p.add_argument("--data")
    p.add_argument("--grouping", help="CSV with header class,category")

    p = sub.add_parser("filter", parents=[common], help="remove classes from a dataset")
    p.add_argument("--data")
    p.add_argument("--remove", nargs="+")
    p.add_argument("--keep", nargs="+")
    p.add_argument("--coco-keep", action="store_const", const=True,
                   help="keep only the 41 retained COCO classes")

    p = sub.add_parser("split", parents=[common], help="train/val/test partition")
    p.add_argument("--data")
    p.add_argument("--fractions", type=float, nargs=3)
    p.add_argument("--group-key", help="split by the dataset's group column (value is recorded only)")

    p = sub.add_parser("surface", parents=[common], help="two-class likelihood surface grid")
    p.add_argument("--case", choices=SURFACE_CASES)
    p.add_argument("--targets", type=int, nargs=2)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--resolution", type=int)

    p = sub.add_parser("rerun", help="reproduce a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output directory (default: the manifest's directory)")
    p.add_argument("--threads", type=int)
    return parser


_META = {"command", "out", "config", "verbose"}


def resolve_config(command, args):
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    cfg.setdefault("seed", 0)
    cfg.setdefault("threads", 1)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise InvalidInputError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = sorted(set(file_cfg) - set(cfg))
        if unknown:
            raise InvalidConfigError(f"unknown config keys {unknown} for {command}")
        cfg.update(file_cfg)
    for key, value in vars(args).items():
        if key in _META or value is None:
            continue
        cfg[key] = value
    for key in INPUT_KEYS:
        if cfg.get(key):
            cfg[key] = str(Path(cfg[key]).resolve())
    if "cb_beta" in cfg:
        cfg["cb_beta"] = _cb_beta(cfg["cb_beta"])
    if "lr_decay" in cfg:
        cfg["lr_decay"] = _parse_decay(cfg["lr_decay"])
    return cfg


def _exit_code(exc):
    if isinstance(exc, InvalidConfigError):
        return EXIT_CONFIG
    if isinstance(exc, InvalidInputError):
        return EXIT_INPUT
    if getattr(exc, "code", None) == "E_DIVERGED":
        return EXIT_DIVERGED
    return EXIT_FAILURE


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rerun":
            rerun(args.manifest, args.out, args.threads)
        else:
            run_command(args.command, resolve_config(args.command, args), args.out)
    except KeyboardInterrupt:
        print("anyclass: error [E_INTERRUPTED]: interrupted", file=sys.stderr)
        return EXIT_INTERRUPTED
    except AnyClassError as exc:
        print(f"anyclass: error [{exc.code}]: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"anyclass: error [E_IO]: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
