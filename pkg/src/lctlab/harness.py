"""Experiment grids: train every (beta, method, hyperparameter, seed) cell,
evaluate each over its inference grid, and aggregate across seeds.

Result layout under ``out``::

    manifest.json                         cell hash -> method, beta, hyperparameters, config
    results/beta=<b>/<method>/<hash>/seed=<s>/
        model.json  trace.jsonl  done
        eval/lam=<g>_<t>.json             one file per evaluation lambda
        curves/lam=<g>_<t>.roc.csv        ROC / PR curves (threshold,x,y)
        curves/lam=<g>_<t>.pr.csv
        error.json                        only when the cell failed
    aggregate/cells.csv                   seed-averaged metrics, one row per eval lambda
    aggregate/<metric>.csv                one table per headline metric
    aggregate/best_per_method.json
    curves/precision_at_recall.csv        selected cells over the recall grid
    curves/scatter.csv                    selected cells, one row per eval lambda
"""
from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .data import Dataset, Standardizer, SyntheticSpec, generate_synthetic, load_csv, subsample_to_beta
from .errors import ConfigError, InputError
from .losses import FAMILY_COORDS
from .ndmath import Rng
from .trainer import TrainConfig, TrainedModel, evaluate, train

log = logging.getLogger(__name__)

# method name -> (loss family, SAM?, training method)
METHOD_TABLE = {
    "Focal": ("focal", False, "baseline"),
    "Focal+LCT": ("focal", False, "lct"),
    "Focal+LCT-noFiLM": ("focal", False, "lct_no_film"),
    "VS": ("vs", False, "baseline"),
    "VS+LCT": ("vs", False, "lct"),
    "VS+LCT-noFiLM": ("vs", False, "lct_no_film"),
    "VS+SAM": ("vs", True, "baseline"),
    "VS+SAM+LCT": ("vs", True, "lct"),
    "VS+SAM+LCT-noFiLM": ("vs", True, "lct_no_film"),
}
_CANON = {k.lower(): k for k in METHOD_TABLE}

HEADLINE_METRICS = ("auc", "ap", "brier", "f1", "balanced_acc", "precision@0.99")
LOWER_IS_BETTER = {"brier", "fpr"}


def canonical_method(name: str) -> str:
    key = "".join(name.split()).lower()
    if key not in _CANON:
        raise ConfigError(f"unknown method {name!r}; expected one of {sorted(METHOD_TABLE)}")
    return _CANON[key]


def load_data(cfg: dict, beta: float | None = None, seed: int | None = None) -> tuple[Dataset, Dataset]:
    """Build ``(train, test)`` from a ``{"synthetic": {...}}`` or ``{"csv": {...}}`` block."""
    if "synthetic" in cfg:
        opts = dict(cfg["synthetic"])
        if beta is not None:
            opts["beta_target"] = beta
        if seed is not None:
            opts["seed"] = seed
        try:
            return generate_synthetic(SyntheticSpec(**opts))
        except TypeError as exc:
            raise ConfigError(f"bad synthetic data options: {exc}") from None
    if "csv" in cfg:
        opts = cfg["csv"]
        label = opts.get("label_column", "label")
        raw = load_csv(opts["train"], label, standardize=False)
        if beta is not None and not math.isclose(beta, raw.beta):
            raw = subsample_to_beta(raw, beta, Rng(opts.get("seed", 0) if seed is None else seed))
        std = Standardizer.fit(raw.features)
        train_ds = Dataset(std.apply(raw.features), raw.labels, std, raw.label_names)
        test_ds = load_csv(opts["test"], label, standardizer=std, label_names=raw.label_names)
        return train_ds, test_ds
    raise ConfigError("data config needs a 'synthetic' or 'csv' block")


def lam_key(lam) -> str:
    return "lam=" + "_".join(repr(float(v)) for v in lam)


def _hash(obj) -> str:
    return hashlib.sha1(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:10]


@dataclass
class MethodSpec:
    name: str
    train_grid: list          # lambda points (baseline) or distribution lists (LCT)
    eval_grid: list | None    # None for baseline methods
    config: dict              # TrainConfig fields shared by every cell of this method


@dataclass
class SweepSpec:
    data: dict
    betas: list
    methods: list[MethodSpec]
    seeds: list
    out: Path | None = None
    workers: int = 1
    beta_f: float = 1.0
    recall_grid: tuple = metrics.DEFAULT_RECALL_GRID
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict, out=None) -> "SweepSpec":
        for key in ("data", "methods", "seeds"):
            if key not in d:
                raise ConfigError(f"sweep config is missing {key!r}")
        common = dict(d.get("train", {}))
        methods = []
        for raw_name, m in d["methods"].items():
            name = canonical_method(raw_name)
            family, sam, method = METHOD_TABLE[name]
            cfg = dict(common)
            cfg.update(m.get("train_options", {}))
            cfg.update({"loss": family, "sam": sam, "method": method})
            coords = cfg.get("lambda_coords") or FAMILY_COORDS[family]
            train_lists = m.get("train")
            if not isinstance(train_lists, dict) or set(train_lists) != set(coords):
                raise ConfigError(f"{name}: 'train' must give a list for each of {list(coords)}")
            train_grid = [list(t) for t in itertools.product(*(train_lists[c] for c in coords))]
            eval_grid = None
            if method != "baseline":
                ev = m.get("eval")
                if isinstance(ev, dict):
                    if set(ev) != set(coords):
                        raise ConfigError(f"{name}: 'eval' must give a list for each of {list(coords)}")
                    eval_grid = [list(map(float, t)) for t in itertools.product(*(ev[c] for c in coords))]
                elif isinstance(ev, list) and ev:
                    eval_grid = [list(map(float, np.atleast_1d(t))) for t in ev]
                else:
                    raise ConfigError(f"{name}: LCT methods need an 'eval' grid")
            methods.append(MethodSpec(name, train_grid, eval_grid, cfg))
        betas = d.get("betas") or [None]
        return cls(d["data"], list(betas), methods, list(d["seeds"]),
                   Path(out or d.get("out", "results")), int(d.get("workers", 1)),
                   float(d.get("beta_f", 1.0)), tuple(d.get("recall_grid", metrics.DEFAULT_RECALL_GRID)), d)

    def cells(self):
        """Yield ``(beta, method_spec, hyper, cell_hash, TrainConfig-dict)`` for each trained model."""
        for beta in self.betas:
            for m in self.methods:
                for hyper in m.train_grid:
                    cfg = dict(m.config)
                    if cfg["method"] == "baseline":
                        cfg["lam"] = [float(v) for v in hyper]
                    else:
                        cfg["dist"] = list(hyper)
                    TrainConfig.from_dict(cfg)  # validate early
                    h = _hash({"beta": beta, "method": m.name, "config": cfg, "data": self.data})
                    yield beta, m, hyper, h, cfg


def _cell_dir(root: Path, beta, method: str, h: str, seed) -> Path:
    return root / "results" / f"beta={beta:g}" / method / h / f"seed={seed}" if beta is not None \
        else root / "results" / "beta=native" / method / h / f"seed={seed}"


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def run_cell(job: dict) -> dict:
    """Train, evaluate, and persist one (beta, method, hyper, seed) cell."""
    cell = Path(job["dir"])
    if (cell / "done").exists():
        return {"dir": str(cell), "status": "cached"}
    try:
        train_ds, test_ds = job["datasets"]
        cfg = TrainConfig.from_dict({**job["config"], "seed": job["seed"]})
        cell.mkdir(parents=True, exist_ok=True)
        model = train(cfg, train_ds, trace_path=cell / "trace.jsonl")
        model.save(cell / "model.json")
        reports = evaluate(model, test_ds, job["eval_grid"], beta_f=job["beta_f"], recall_grid=job["recall_grid"])
        for r in reports:
            key = lam_key(r.lam)
            _write_json(cell / "eval" / f"{key}.json", {
                "beta": job["beta"], "method": job["method"], "hash": job["hash"], "seed": job["seed"],
                "train_hyper": job["hyper"], "lam": r.lam, "metrics": r.metrics,
            })
            (cell / "curves").mkdir(exist_ok=True)
            metrics.write_curve_csv(cell / "curves" / f"{key}.roc.csv", r.roc)
            metrics.write_curve_csv(cell / "curves" / f"{key}.pr.csv", r.pr)
        (cell / "done").write_text("")
        return {"dir": str(cell), "status": "ok"}
    except Exception as exc:  # recorded per cell; the sweep keeps going
        _write_json(cell / "error.json", {"error": repr(exc), "traceback": traceback.format_exc()})
        log.warning("cell %s failed: %r", cell, exc)
        return {"dir": str(cell), "status": "failed", "error": repr(exc)}


class ResultStore:
    def __init__(self, root):
        self.root = Path(root)

    def manifest(self) -> dict:
        return json.loads((self.root / "manifest.json").read_text(encoding="utf-8"))

    def eval_files(self) -> list[Path]:
        return sorted((self.root / "results").glob("*/*/*/seed=*/eval/*.json"))

    def cell_records(self) -> list[dict]:
        return [json.loads(p.read_text(encoding="utf-8")) | {"_path": str(p)} for p in self.eval_files()]

    def averaged(self) -> list[dict]:
        """Seed-averaged rows keyed by (beta, method, hash, eval lambda)."""
        groups: dict[tuple, list[dict]] = {}
        for rec in self.cell_records():
            key = (json.dumps(rec["beta"]), rec["method"], rec["hash"], json.dumps(rec["lam"]))
            groups.setdefault(key, []).append(rec)
        rows = []
        for key in sorted(groups):
            recs = sorted(groups[key], key=lambda r: r["seed"])
            names = list(recs[0]["metrics"])
            rows.append({
                "beta": recs[0]["beta"], "method": recs[0]["method"], "hash": recs[0]["hash"],
                "train_hyper": recs[0]["train_hyper"], "lam": recs[0]["lam"],
                "seeds": [r["seed"] for r in recs],
                "metrics": {k: math.fsum(r["metrics"][k] for r in recs) / len(recs) for k in names},
                "per_seed": {k: [r["metrics"][k] for r in recs] for k in names},
            })
        return rows

    def aggregate(self, metric_names=HEADLINE_METRICS) -> list[dict]:
        """Rewrite ``aggregate/`` from the cell files alone."""
        rows = self.averaged()
        agg = self.root / "aggregate"
        agg.mkdir(parents=True, exist_ok=True)
        if rows:
            names = list(rows[0]["metrics"])
            with open(agg / "cells.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["beta", "method", "hash", "train_hyper", "eval_lambda", "n_seeds"] + names)
                for r in rows:
                    w.writerow([r["beta"], r["method"], r["hash"], json.dumps(r["train_hyper"]),
                                json.dumps(r["lam"]), len(r["seeds"])] + [repr(r["metrics"][k]) for k in names])
            for name in metric_names:
                if name not in rows[0]["metrics"]:
                    continue
                with open(agg / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
                    w = csv.writer(fh)
                    w.writerow(["beta", "method", "hash", "train_hyper", "eval_lambda", "mean", "per_seed"])
                    for r in rows:
                        w.writerow([r["beta"], r["method"], r["hash"], json.dumps(r["train_hyper"]),
                                    json.dumps(r["lam"]), repr(r["metrics"][name]),
                                    json.dumps(r["per_seed"][name])])
            best = {name: best_per_method(rows, name) for name in metric_names if name in rows[0]["metrics"]}
            _write_json(agg / "best_per_method.json", best)
        return rows


def best_per_method(store, metric: str, direction: str | None = None) -> list[dict]:
    """Best seed-averaged ``metric`` per (beta, method) over training hyperparameters and eval lambdas."""
    rows = store.averaged() if isinstance(store, ResultStore) else store
    if direction is None:
        direction = "min" if metric in LOWER_IS_BETTER else "max"
    if direction not in ("min", "max"):
        raise InputError(f"direction must be 'min' or 'max', got {direction!r}")
    best: dict[tuple, dict] = {}
    for r in rows:
        if metric not in r["metrics"]:
            raise InputError(f"metric {metric!r} not in report schema {sorted(r['metrics'])}")
        key = (json.dumps(r["beta"]), r["method"])
        v = r["metrics"][metric]
        cur = best.get(key)
        if cur is None or (v > cur["value"] if direction == "max" else v < cur["value"]):
            best[key] = {"beta": r["beta"], "method": r["method"], "hash": r["hash"],
                         "train_hyper": r["train_hyper"], "lam": r["lam"], "metric": metric,
                         "direction": direction, "value": v}
    return [best[k] for k in sorted(best)]


def select_best_cells(rows: list[dict], metric: str = "auc") -> list[tuple]:
    """Per (beta, method), the trained model (hash) reaching the best ``metric``."""
    return [(b["beta"], b["method"], b["hash"]) for b in best_per_method(rows, metric)]


def _precision_from_pr(curve, r: float) -> float:
    return max((p.y for p in curve if p.x >= r), default=0.0)


def emit_curves(store: ResultStore, selection=None, recall_grid=metrics.DEFAULT_RECALL_GRID) -> dict:
    """Precision-at-recall tables and adaptability scatter data for selected models."""
    rows = store.averaged()
    if selection is None:
        selection = select_best_cells(rows)
    selection = {(json.dumps(b), m, h) for b, m, h in selection}
    out = store.root / "curves"
    out.mkdir(parents=True, exist_ok=True)
    chosen = [r for r in rows if (json.dumps(r["beta"]), r["method"], r["hash"]) in selection]
    par_path = out / "precision_at_recall.csv"
    with open(par_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "method", "hash", "eval_lambda"] + [f"recall>={r:g}" for r in recall_grid])
        for r in chosen:
            precs = []
            for rec_r in recall_grid:
                per_seed = []
                for s in r["seeds"]:
                    path = _cell_dir(store.root, r["beta"], r["method"], r["hash"], s) / "curves" / \
                        f"{lam_key(r['lam'])}.pr.csv"
                    per_seed.append(_precision_from_pr(metrics.read_curve_csv(path), rec_r))
                precs.append(math.fsum(per_seed) / len(per_seed))
            w.writerow([r["beta"], r["method"], r["hash"], json.dumps(r["lam"])] + [repr(p) for p in precs])
    scatter_path = out / "scatter.csv"
    cols = ["auc", "brier", "precision@0.99", "f1", "balanced_acc", "ap"]
    with open(scatter_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "method", "hash", "eval_lambda"] + cols)
        for r in chosen:
            w.writerow([r["beta"], r["method"], r["hash"], json.dumps(r["lam"])] +
                       [repr(r["metrics"].get(c, float("nan"))) for c in cols])
    return {"precision_at_recall": par_path, "scatter": scatter_path, "rows": chosen}


def run_sweep(spec: SweepSpec, *, workers: int | None = None) -> ResultStore:
    root = Path(spec.out)
    root.mkdir(parents=True, exist_ok=True)
    datasets = {}
    jobs, manifest = [], {}
    for beta, m, hyper, h, cfg in spec.cells():
        if beta not in datasets:
            datasets[beta] = load_data(spec.data, beta)
        manifest[h] = {"beta": beta, "method": m.name, "train_hyper": hyper, "config": cfg}
        for seed in spec.seeds:
            jobs.append({
                "dir": str(_cell_dir(root, beta, m.name, h, seed)), "datasets": datasets[beta],
                "config": cfg, "seed": seed, "eval_grid": m.eval_grid, "beta": beta, "method": m.name,
                "hash": h, "hyper": hyper, "beta_f": spec.beta_f, "recall_grid": spec.recall_grid,
            })
    _write_json(root / "manifest.json", {"cells": manifest, "spec": spec.raw})
    n_workers = workers or spec.workers
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            results = list(pool.map(run_cell, jobs))
    else:
        results = [run_cell(j) for j in jobs]
    failed = [r for r in results if r["status"] == "failed"]
    log.info("sweep: %d cells, %d failed", len(results), len(failed))
    store = ResultStore(root)
    store.aggregate()
    return store


def load_model(path) -> TrainedModel:
    return TrainedModel.load(path)
