"""Command-line interface: ``mann <command> [flags]``.

Every command prints exactly one JSON document on stdout and writes one run
manifest; logs go to stderr (level from ``MANN_LOG``).

Exit codes: 0 ok, 1 invalid arguments, 2 data errors, 3 training errors,
4 benchmark criteria failed.
"""

import argparse
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from mann import __version__, bench, metrics, persist
from mann.boost import BoostedModel, TrainConfig, train
from mann.continual import ContinualConfig, continual_update
from mann.data import Dataset, gen_analytical, gen_drift_pair, gen_moons, load_csv
from mann.errors import (
    DataError, DegenerateTargetError, IncompatibleDatasetError, InputShapeError,
    ModelFormatError, ModelKindError, NumericError, TrainingDivergedError,
)
from mann.losses import LossKind
from mann.net import OptimizerConfig

log = logging.getLogger("mann")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3
EXIT_BENCH = 4

DATA_ERRORS = (DataError, DegenerateTargetError, IncompatibleDatasetError,
               InputShapeError, ModelFormatError, ModelKindError, OSError)
TRAINING_ERRORS = (TrainingDivergedError, NumericError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _configure_logging():
    level = os.environ.get("MANN_LOG", "error").upper()
    logging.basicConfig(
        stream=sys.stderr, level=getattr(logging, level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
    )


# -- argument handling ---------------------------------------------------------

def _layers(text):
    try:
        sizes = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad layer list {text!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError(f"bad layer list {text!r}")
    return sizes


def _int_list(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


def _add_train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--loss", choices=[k.value for k in LossKind])
    g.add_argument("--nu", type=float, help="shrinkage applied to each learner")
    g.add_argument("--iters", type=int, help="maximum boosting iterations")
    g.add_argument("--epoch-cap", type=int)
    g.add_argument("--val-frac", type=float)
    g.add_argument("--gate-patience", type=int)
    g.add_argument("--gate-tolerance", type=float)
    g.add_argument("--net-patience", type=int)
    g.add_argument("--threshold", type=float, help="validation error that ends training")
    g.add_argument("--val-metric", choices=["mae", "mse", "rmse", "logloss", "error"])
    g.add_argument("--layers", type=_layers, help="hidden layer sizes, e.g. 8,8,8")
    g.add_argument("--optimizer", choices=["adam", "sgd"])
    g.add_argument("--lr", type=float, help="optimizer step size")
    g.add_argument("--batch-size", type=int, help="0 for full-batch epochs")
    g.add_argument("--seed", type=int)
    g.add_argument("--config", help="JSON file with TrainConfig fields")


def _add_common(p):
    p.add_argument("--manifest", help="where to write the run manifest")
    p.add_argument("--no-header", action="store_true",
                   help="CSV files have no header row")


FLAG_FIELDS = {
    "loss": "loss", "nu": "nu", "iters": "max_iterations", "epoch_cap": "epoch_cap",
    "val_frac": "validation_fraction", "gate_patience": "gate_patience_iters",
    "gate_tolerance": "gate_tolerance", "net_patience": "net_patience_epochs",
    "threshold": "error_threshold", "val_metric": "val_metric",
    "layers": "hidden_layers", "seed": "seed",
}


def resolve_config(args) -> TrainConfig:
    """Defaults, then ``--config`` file, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    for flag, field in FLAG_FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[field] = v
    if getattr(args, "batch_size", None) is not None:
        values["batch_size"] = args.batch_size or None
    opt = dict(values.pop("optimizer", None) or {})
    if getattr(args, "optimizer", None) is not None:
        opt["kind"] = args.optimizer
    if getattr(args, "lr", None) is not None:
        opt["step_size"] = args.lr
    try:
        if opt:
            base = TrainConfig().optimizer
            values["optimizer"] = OptimizerConfig(**{**base.__dict__, **opt})
        return TrainConfig.from_dict(values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _model_levels(model):
    """Categorical levels fitted at training time, keyed by column name."""
    cols = list(model.meta.get("columns", []))
    if isinstance(model.meta.get("target"), dict):
        cols.append(model.meta["target"])
    return {c["name"]: c["levels"] for c in cols if c.get("kind") == "categorical"}


def _load(path, target, args, model=None):
    levels = _model_levels(model) if model is not None else None
    return load_csv(path, target, has_header=not args.no_header, levels=levels)


def _metrics_for(model: BoostedModel, data: Dataset):
    if model.loss is LossKind.LOGLOSS:
        return metrics.classification_metrics(
            data.targets, model.predict_proba(data.features)).to_dict()
    return metrics.regression_metrics(
        data.targets, model.predict_raw(data.features)).to_dict()


def _strip_suffix(path):
    name = str(path)
    for suffix in (persist.SUFFIX, ".json", ".csv"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


# -- commands -----------------------------------------------------------------

def cmd_train(args, manifest):
    cfg = resolve_config(args)
    data = _load(args.data, args.target, args)
    manifest["config"] = cfg.to_dict()
    manifest["datasets"] = {"train": data.fingerprint()}
    manifest["seed"] = cfg.seed
    model, trace = train(data, cfg)
    model.meta["columns"] = [c.to_dict() for c in data.column_meta]
    model.meta["target"] = data.target_meta.to_dict()
    model_path = Path(args.model or f"{Path(args.data).stem}{persist.SUFFIX}")
    persist.save(model, model_path)
    result = {
        "model": str(model_path),
        "n_learners": model.n_learners,
        "stop_reason": trace.final_decision,
        "rows_dropped": data.report.dropped if data.report else 0,
        "metrics": _metrics_for(model, data),
    }
    manifest["iterations"] = trace.to_list()
    manifest["metrics"] = result["metrics"]
    manifest["outputs"] = {"model": str(model_path)}
    return result, EXIT_OK


def cmd_predict(args, manifest):
    model = persist.load(args.model)
    data = _load(args.data, args.target, args, model)
    _check_dims(model, data)
    raw = model.predict_raw(data.features)
    result = {"model": args.model, "n": len(data)}
    if model.loss is LossKind.LOGLOSS:
        proba = model.predict_proba(data.features)
        out = {"probability": proba, "label": (proba >= 0.5).astype(int)}
    else:
        out = {"prediction": raw}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            keys = list(out)
            fh.write(",".join(keys) + "\n")
            for i in range(len(data)):
                fh.write(",".join(format(float(out[k][i]), ".17g") if k != "label"
                                  else str(int(out[k][i])) for k in keys) + "\n")
        result["out"] = args.out
        manifest["outputs"] = {"predictions": args.out}
    else:
        result.update({k: [float(v) for v in vals] for k, vals in out.items()})
    manifest["datasets"] = {"input": data.fingerprint()}
    return result, EXIT_OK


def _check_dims(model, data):
    if data.n_features != model.feature_dim:
        raise IncompatibleDatasetError(
            f"{data.name}: {data.n_features} features, model expects {model.feature_dim}"
        )


def cmd_eval(args, manifest):
    model = persist.load(args.model)
    data = _load(args.data, args.target, args, model)
    _check_dims(model, data)
    result = {"model": args.model, "metrics": _metrics_for(model, data)}
    manifest["datasets"] = {"eval": data.fingerprint()}
    manifest["metrics"] = result["metrics"]
    return result, EXIT_OK


def cmd_continue(args, manifest):
    model_path = Path(args.model)
    original_bytes = model_path.read_bytes()
    model = persist.load(model_path)
    old = _load(args.old, args.target, args, model)
    new = _load(args.new, args.target, args, model)
    _check_dims(model, old)
    _check_dims(model, new)
    cfg = resolve_config(args)
    cfg = TrainConfig.from_dict({**cfg.to_dict(), "loss": model.loss.value,
                                 "nu": model.nu})
    ccfg = ContinualConfig(epsilon=args.epsilon, level2=cfg, metric=args.metric)
    before = {"old": _metrics_for(model, old), "new": _metrics_for(model, new)}
    outcome = continual_update(model, old, new, ccfg, seed=cfg.seed)
    final = outcome.model
    out_path = Path(args.out) if args.out else model_path
    if outcome.level == 0 and out_path == model_path:
        written = False
    elif outcome.level == 0:
        out_path.write_bytes(original_bytes)
        written = True
    else:
        for key in ("columns", "target"):
            if key in model.meta:
                final.meta[key] = model.meta[key]
        persist.save(final, out_path)
        written = True
    result = {
        "model": str(out_path),
        "written": written,
        "drift": outcome.initial.to_dict(),
        "drift_after_retrain": outcome.after_retrain.to_dict()
        if outcome.after_retrain else None,
        "level": outcome.level,
        "learners_before": model.n_learners,
        "learners_after": final.n_learners,
        "learners_added": final.n_learners - model.n_learners,
        "metrics_before": before,
        "metrics_after": {"old": _metrics_for(final, old), "new": _metrics_for(final, new)},
    }
    manifest["config"] = cfg.to_dict()
    manifest["seed"] = cfg.seed
    manifest["datasets"] = {"old": old.fingerprint(), "new": new.fingerprint()}
    manifest["metrics"] = {"before": before, "after": result["metrics_after"]}
    manifest["continual"] = {k: result[k] for k in
                             ("drift", "drift_after_retrain", "level", "learners_added")}
    manifest["outputs"] = {"model": str(out_path)}
    return result, EXIT_OK


def _write_csv(path, data: Dataset, target="target"):
    names = [c.name for c in data.column_meta] + [target]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(names) + "\n")
        for row, t in zip(data.features, data.targets):
            fh.write(",".join(format(float(v), ".17g") for v in (*row, t)) + "\n")


def cmd_synth(args, manifest):
    if args.out is None:
        raise UsageError("synth needs --out")
    seed = args.seed if args.seed is not None else 0
    files = {}
    if args.kind == "analytical":
        data = gen_analytical(args.grid_n, args.noise, seed=seed)
        _write_csv(args.out, data)
        files["data"] = args.out
        rows = len(data)
    elif args.kind == "moons":
        data = gen_moons(args.n, args.noise if args.noise_set else 0.2, seed=seed)
        _write_csv(args.out, data)
        files["data"] = args.out
        rows = len(data)
    else:
        old, new = gen_drift_pair(args.n, args.shift, seed=seed,
                                  noise_sd_fraction=args.noise)
        stem = _strip_suffix(args.out)
        files = {"old": f"{stem}_old.csv", "new": f"{stem}_new.csv"}
        _write_csv(files["old"], old)
        _write_csv(files["new"], new)
        rows = len(old) + len(new)
    manifest["seed"] = seed
    manifest["outputs"] = files
    return {"kind": args.kind, "rows": rows, "files": files, "target": "target"}, EXIT_OK


def cmd_residuum(args, manifest):
    checkpoints = args.checkpoints
    seed = args.seed if args.seed is not None else 0
    data = gen_analytical(args.grid_n, 0.05, seed=seed)
    if args.model:
        model = persist.load(args.model)
    else:
        cfg = resolve_config(args)
        model, trace = train(data, cfg)
        manifest["config"] = cfg.to_dict()
        manifest["iterations"] = trace.to_list()
    if model.feature_dim != 2:
        raise IncompatibleDatasetError("residuum grids need a model with 2 features")
    too_far = [c for c in checkpoints if c > model.n_learners or c < 0]
    if too_far:
        raise UsageError(
            f"checkpoints {too_far} beyond the {model.n_learners} trained iterations"
        )
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    files, means = {}, {}
    for c in checkpoints:
        grid = bench.residuum_grid(model, data, c)
        path = out_dir / f"residuum_{c:03d}.csv"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x,y,abs_residual\n")
            for (x, y), r in zip(data.features, grid):
                fh.write(f"{x:.17g},{y:.17g},{r:.17g}\n")
        files[str(c)] = str(path)
        means[str(c)] = float(np.mean(grid))
    manifest["seed"] = seed
    manifest["outputs"] = files
    manifest["metrics"] = {"mean_abs_residual": means}
    return {"grid_n": args.grid_n, "rows": len(data), "files": files,
            "mean_abs_residual": means, "f0": model.f0}, EXIT_OK


def cmd_bench(args, manifest):
    seeds = tuple(args.seeds) if args.seeds else bench.DEFAULT_SEEDS
    criteria, details = bench.run_bench(seeds, quick=args.quick)
    for c in criteria:
        print(c.line(), file=sys.stderr)
    failed = [c.name for c in criteria if c.gating and not c.passed]
    result = {
        "quick": args.quick,
        "seeds": list(seeds),
        "criteria": [c.to_dict() for c in criteria],
        "failed": failed,
        "details": details,
    }
    manifest["metrics"] = {"criteria": result["criteria"]}
    return result, (EXIT_BENCH if failed else EXIT_OK)


# -- parser / entry point ------------------------------------------------------

def build_parser():
    parser = _Parser(prog="mann", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a boosted model on a CSV file")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--model", help=f"output model file (*{persist.SUFFIX})")
    p.add_argument("--out", help="alias for --model")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a CSV file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", help="column to drop before scoring")
    p.add_argument("--out", help="write predictions to this CSV instead of stdout")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="metrics of a model on a labelled CSV file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("continue", help="continual update on new data")
    p.add_argument("--model", required=True)
    p.add_argument("--old", "--data", dest="old", required=True,
                   help="data the model was trained on")
    p.add_argument("--new", required=True, help="newly collected data")
    p.add_argument("--target", required=True)
    p.add_argument("--epsilon", type=float,
                   help="drift threshold (default: 10%% of the old-data error)")
    p.add_argument("--metric", choices=["mae", "mse", "rmse", "logloss", "error"])
    p.add_argument("--out", help="updated model file (default: overwrite --model)")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_continue)

    p = sub.add_parser("synth", help="write a synthetic dataset as CSV")
    p.add_argument("--kind", choices=["analytical", "drift", "moons"], default="analytical")
    p.add_argument("--grid-n", type=int, default=100)
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--shift", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=None,
                   help="noise level (fraction of target sd; moons: absolute sd)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("residuum", help="export |clean - F_j| grids at checkpoints")
    p.add_argument("--model", help="model trained on the analytical grid "
                                   "(trained here when omitted)")
    p.add_argument("--grid-n", type=int, default=100)
    p.add_argument("--checkpoints", type=_int_list, default=[0, 5, 10, 15])
    p.add_argument("--out", help="output directory")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_residuum)

    p = sub.add_parser("bench", help="run the benchmark criteria")
    p.add_argument("--seeds", "--seed", dest="seeds", type=_int_list,
                   help="comma-separated seeds, e.g. 0,1,2,3,4")
    p.add_argument("--quick", action="store_true", help="40x40 grid, 10 iterations")
    p.add_argument("--out", help="directory for the manifest")
    _add_common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def _manifest_path(args):
    if args.manifest:
        return Path(args.manifest)
    cmd = args.command
    if cmd == "train":
        target = args.model or args.out or f"{Path(args.data).stem}{persist.SUFFIX}"
        return Path(_strip_suffix(target) + ".manifest.json")
    if cmd == "continue":
        return Path(_strip_suffix(args.out or args.model) + ".manifest.json")
    out = getattr(args, "out", None)
    if out:
        p = Path(out)
        if cmd in ("residuum", "bench") or p.is_dir():
            return p / f"mann-{cmd}.manifest.json"
        return Path(f"{_strip_suffix(out)}.{cmd}.manifest.json")
    return Path(f"mann-{cmd}.manifest.json")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def main(argv=None):
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and args.model is None:
        args.model = args.out
    if args.command == "synth":
        args.noise_set = args.noise is not None
        if args.noise is None:
            args.noise = 0.05

    manifest = {
        "command": args.command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "library_version": __version__,
        "python": platform.python_version(),
    }
    started = time.time()
    code, result = EXIT_OK, None
    try:
        result, code = args.func(args, manifest)
    except UsageError as exc:
        code, result = EXIT_USAGE, {"error": str(exc), "kind": "usage"}
    except TRAINING_ERRORS as exc:
        code, result = EXIT_TRAINING, {"error": str(exc), "kind": "training"}
    except DATA_ERRORS as exc:
        code, result = EXIT_DATA, {"error": str(exc), "kind": "data"}

    manifest["status"] = "ok" if code == EXIT_OK else ("failed" if code == EXIT_BENCH
                                                         else "error")
    manifest["exit_code"] = code
    manifest["timing"] = {"started": started, "seconds": time.time() - started}
    if code not in (EXIT_OK, EXIT_BENCH):
        manifest["error"] = result["error"]
        log.error("%s", result["error"])
    try:
        path = _manifest_path(args)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(manifest), indent=1, sort_keys=True) + "\n")
        if isinstance(result, dict):
            result["manifest"] = str(path)
    except OSError as exc:
        log.error("could not write manifest: %s", exc)

    json.dump(_jsonable(result), sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    sys.stdout.flush()
    return code


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
