"""Command line entry point: ``lctlab {generate-data,train,evaluate,sweep,report}``."""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
from pathlib import Path

from . import harness, metrics
from .data import write_csv
from .errors import LctError
from .losses import FAMILY_COORDS
from .trainer import TrainConfig, TrainedModel, evaluate, train


def _read_config(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LctError(f"{path}: invalid JSON ({exc})") from None


def _lambda_grid(grid, coords=None):
    """Accept either a list of lambda vectors or ``{coord: [values]}``."""
    if grid is None or isinstance(grid, list):
        return grid
    coords = coords or list(grid)
    return [list(t) for t in itertools.product(*(grid[c] for c in coords))]


def cmd_generate_data(args) -> int:
    cfg = _read_config(args.config)
    data_cfg = cfg.get("data", cfg) if cfg else {"synthetic": {}}
    train_ds, test_ds = harness.load_data(data_cfg, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "train.csv", train_ds)
    write_csv(out / "test.csv", test_ds)
    summary = {"train": {"n_minus": train_ds.n_minus, "n_plus": train_ds.n_plus, "beta": train_ds.beta},
               "test": {"n_minus": test_ds.n_minus, "n_plus": test_ds.n_plus}, "data": data_cfg}
    (out / "data.json").write_text(json.dumps(summary, indent=1) + "\n", encoding="utf-8")
    print(json.dumps(summary["train"]))
    return 0


def cmd_train(args) -> int:
    cfg = _read_config(args.config)
    train_cfg = dict(cfg.get("train", {}))
    if args.seed is not None:
        train_cfg["seed"] = args.seed
    tc = TrainConfig.from_dict(train_cfg)
    train_ds, _ = harness.load_data(cfg.get("data", {"synthetic": {}}))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = train(tc, train_ds, trace_path=out / "trace.jsonl")
    model.save(out / "model.json")
    print(json.dumps({"final_loss": model.loss_log[-1], "beta": model.beta,
                      "n_params": int(model.net.theta.size)}))
    return 0


def cmd_evaluate(args) -> int:
    cfg = _read_config(args.config)
    model = TrainedModel.load(cfg["model"])
    data_cfg = cfg.get("data", {"synthetic": {}})
    _, test_ds = harness.load_data(data_cfg, seed=args.seed)
    grid = _lambda_grid(cfg.get("grid"), model.config.lambda_coords or FAMILY_COORDS[model.config.loss])
    reports = evaluate(model, test_ds, grid, beta_f=cfg.get("beta_f", 1.0),
                       recall_grid=tuple(cfg.get("recall_grid", metrics.DEFAULT_RECALL_GRID)))
    out = Path(args.out)
    (out / "curves").mkdir(parents=True, exist_ok=True)
    for r in reports:
        key = harness.lam_key(r.lam)
        metrics.write_curve_csv(out / "curves" / f"{key}.roc.csv", r.roc)
        metrics.write_curve_csv(out / "curves" / f"{key}.pr.csv", r.pr)
    (out / "reports.json").write_text(json.dumps([r.to_dict() for r in reports], indent=1) + "\n",
                                      encoding="utf-8")
    for r in reports:
        print(json.dumps({"lam": r.lam, "auc": r.metrics["auc"], "ap": r.metrics["ap"],
                          "brier": r.metrics["brier"]}))
    return 0


def cmd_sweep(args) -> int:
    cfg = _read_config(args.config)
    if args.seed is not None:
        data = cfg.setdefault("data", {"synthetic": {}})
        if "synthetic" in data:
            data["synthetic"]["seed"] = args.seed
        elif "csv" in data:
            data["csv"]["seed"] = args.seed
    spec = harness.SweepSpec.from_dict(cfg, out=args.out)
    store = harness.run_sweep(spec, workers=args.workers)
    harness.emit_curves(store, recall_grid=spec.recall_grid)
    for row in harness.best_per_method(store, "auc"):
        print(json.dumps(row))
    return 0


def cmd_report(args) -> int:
    cfg = _read_config(args.config)
    store = harness.ResultStore(args.out)
    names = tuple(cfg.get("metrics", harness.HEADLINE_METRICS))
    store.aggregate(names)
    harness.emit_curves(store, recall_grid=tuple(cfg.get("recall_grid", metrics.DEFAULT_RECALL_GRID)))
    for name in names:
        for row in harness.best_per_method(store, name):
            print(json.dumps({k: row[k] for k in ("beta", "method", "metric", "value", "lam", "train_hyper")}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lctlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    verbs = {
        "generate-data": (cmd_generate_data, "write synthetic train/test CSVs"),
        "train": (cmd_train, "train one model"),
        "evaluate": (cmd_evaluate, "evaluate a saved model over a lambda grid"),
        "sweep": (cmd_sweep, "train and evaluate a full experiment grid"),
        "report": (cmd_report, "re-aggregate a results directory"),
    }
    for name, (fn, help_) in verbs.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="training seed for 'train'; data seed for the other verbs")
        p.add_argument("--out", required=True, help="output directory")
        if name == "sweep":
            p.add_argument("--workers", type=int, default=None, help="parallel worker processes")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (LctError, OSError, KeyError) as exc:
        print(f"lctlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
