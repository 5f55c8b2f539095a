"""Training loop for fixed-lambda, loss-conditional, and loss-only-conditional runs.

All three methods share one loop. A fixed lambda is a point-mass
distribution, so ``baseline`` and ``lct`` differ only in whether lambda is
drawn from a spread-out distribution and whether it reaches the FiLM block.

===============  ====================  =====================
method           lambda per batch      network sees lambda
===============  ====================  =====================
``baseline``     fixed point           no (unless ``film``)
``lct``          drawn from the pdfs   yes
``lct_no_film``  drawn from the pdfs   no
===============  ====================  =====================
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import metrics
from .data import Dataset, Standardizer
from .errors import ConfigError, TrainingDivergedError
from .film_net import Architecture, FilmMlp
from .losses import LossSpec, positive_score
from .ndmath import Rng
from .optim import make_optimizer
from .sampler import LambdaDistribution, sample_lambda

METHODS = ("baseline", "lct", "lct_no_film")


@dataclass
class TrainConfig:
    method: str = "baseline"
    loss: str = "vs"
    lam: list | None = None             # baseline: the fixed lambda
    dist: list | None = None            # lct*: one "L(a,b,h_b)" (or number) per coordinate
    lambda_coords: list | None = None   # default: (alpha, phi) or (gamma, tau)
    fixed: dict = field(default_factory=dict)
    film: bool | None = None            # baseline only; lct forces True, lct_no_film False
    optimizer: str = "sgd"
    sam: bool = False
    rho: float = 0.1
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 0.0
    epochs: int = 200
    batch_size: int = 128
    clip_norm: float | None = 0.5
    lr_drop_at: float = 0.8
    lr_drop_factor: float = 0.1
    hidden: list = field(default_factory=lambda: [32, 32])
    channels: int = 16
    film_hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "baseline":
            if self.lam is None:
                raise ConfigError("baseline training needs a fixed lambda ('lam')")
        elif self.dist is None:
            raise ConfigError(f"{self.method} training needs a lambda distribution ('dist')")
        if self.method == "lct" and self.film is False:
            raise ConfigError("lct always feeds lambda through FiLM")
        if self.method == "lct_no_film" and self.film:
            raise ConfigError("lct_no_film never feeds lambda to the network")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        self.distribution()  # fail early on infeasible pdfs

    @property
    def film_enabled(self) -> bool:
        if self.method == "lct":
            return True
        if self.method == "lct_no_film":
            return False
        return bool(self.film)

    def distribution(self) -> LambdaDistribution:
        if self.method == "baseline":
            return LambdaDistribution.point(self.lam)
        return LambdaDistribution.parse(self.dist)

    def loss_spec(self, beta: float) -> LossSpec:
        coords = tuple(self.lambda_coords) if self.lambda_coords else None
        return LossSpec(self.loss, beta=beta, coords=coords, fixed=dict(self.fixed))

    def architecture(self, input_dim: int, lambda_dim: int) -> Architecture:
        return Architecture(input_dim, lambda_dim, tuple(self.hidden), self.channels, self.film_hidden)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown training options {sorted(extra)}")
        return cls(**d)


@dataclass
class TrainedModel:
    net: FilmMlp
    config: TrainConfig
    beta: float
    loss_log: list = field(default_factory=list)
    standardizer: Standardizer | None = None
    label_names: tuple = ("0", "1")

    @property
    def requires_lambda(self) -> bool:
        return self.config.method == "lct"

    @property
    def film_enabled(self) -> bool:
        return self.config.film_enabled

    def training_lambda(self) -> list | None:
        return list(self.config.lam) if self.config.method == "baseline" else None

    def scores(self, x, lam=None) -> np.ndarray:
        lam = lam if self.film_enabled else None
        return positive_score(self.net.logits(x, lam, self.film_enabled))

    def to_dict(self) -> dict:
        return {
            "model": self.net.to_dict(),
            "config": self.config.to_dict(),
            "beta": self.beta,
            "loss_log": list(self.loss_log),
            "standardizer": self.standardizer.to_dict() if self.standardizer else None,
            "label_names": list(self.label_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        std = Standardizer.from_dict(d["standardizer"]) if d.get("standardizer") else None
        return cls(FilmMlp.from_dict(d["model"]), TrainConfig.from_dict(d["config"]), d["beta"],
                   d.get("loss_log", []), std, tuple(d.get("label_names", ("0", "1"))))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainedModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _epoch_record(epoch, lr, losses, norms, lams) -> dict:
    lams = np.array(lams)
    return {
        "epoch": epoch,
        "lr": lr,
        "mean_loss": float(np.mean(losses)),
        "grad_norm": {"mean": float(np.mean(norms)), "min": float(np.min(norms)), "max": float(np.max(norms))},
        "lambda": {"mean": lams.mean(axis=0).tolist(), "min": lams.min(axis=0).tolist(),
                   "max": lams.max(axis=0).tolist(), "draws": len(lams)},
    }


def train(cfg: TrainConfig, ds: Dataset, *, hook: Callable[[dict], None] | None = None,
          trace_path=None) -> TrainedModel:
    """Fit a FiLM-MLP on ``ds``.

    ``hook`` receives one dict per mini-batch (epoch, batch, lam, loss,
    grad_norm); ``trace_path`` gets one JSON line per epoch.
    """
    beta = ds.beta
    spec = cfg.loss_spec(beta)
    dist = cfg.distribution()
    if dist.dim != spec.dim:
        raise ConfigError(f"distribution has {dist.dim} coordinates but lambda {spec.coords} needs {spec.dim}")
    streams = Rng(cfg.seed).streams("init", "shuffle", "lambda")
    net = FilmMlp.init(cfg.architecture(ds.dim, spec.dim), streams["init"])
    film = cfg.film_enabled
    # without FiLM the generator gets no gradient; pin it so weight decay cannot move it either
    film_slice = net.film_slice()
    frozen = None if film else net.theta[film_slice].copy()
    opt = make_optimizer(cfg.optimizer, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay,
                         clip_norm=cfg.clip_norm, rho=cfg.rho, sam=cfg.sam)
    drop_epoch = math.floor(cfg.lr_drop_at * cfg.epochs) if cfg.lr_drop_at is not None else cfg.epochs
    loss_log = []
    trace = open(trace_path, "w", encoding="utf-8") if trace_path else None
    try:
        for epoch in range(cfg.epochs):
            opt.lr = cfg.lr * (cfg.lr_drop_factor if epoch >= drop_epoch else 1.0)
            losses, norms, lams = [], [], []
            for b, (x, y) in enumerate(ds.batches(cfg.batch_size, streams["shuffle"])):
                lam = sample_lambda(dist, streams["lambda"])
                net_lam = lam if film else None

                def diverged(norm, epoch=epoch, b=b, lam=lam):
                    return TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, batch {b}, lambda={lam.tolist()}, grad norm {norm}",
                        epoch=epoch, batch=b, lam=lam.tolist(), grad_norm=norm)

                def loss_and_grad(theta, x=x, y=y, lam=lam, net_lam=net_lam):
                    net.set_theta(theta)
                    z, tape = net.forward(x, net_lam, film)
                    if not np.all(np.isfinite(z)):
                        raise diverged(float("nan"))
                    per_sample, dz = spec.value_and_grad(y, z, lam)
                    return float(per_sample.mean()), net.backward(tape, dz / len(y))

                theta, loss, norm = opt.update(net.theta.copy(), loss_and_grad)
                if not (math.isfinite(loss) and np.all(np.isfinite(theta))):
                    raise diverged(norm)
                if frozen is not None:
                    theta[film_slice] = frozen
                net.set_theta(theta)
                losses.append(loss)
                norms.append(norm)
                lams.append(lam)
                if hook is not None:
                    hook({"epoch": epoch, "batch": b, "lam": lam.tolist(), "loss": loss, "grad_norm": norm})
            record = _epoch_record(epoch, opt.lr, losses, norms, lams)
            loss_log.append(record["mean_loss"])
            if trace:
                trace.write(json.dumps(record) + "\n")
    finally:
        if trace:
            trace.close()
    return TrainedModel(net, cfg, beta, loss_log, ds.standardizer, ds.label_names)


@dataclass
class EvalReport:
    lam: list | None
    metrics: dict
    roc: list
    pr: list

    def to_dict(self) -> dict:
        return {"lam": self.lam, "metrics": self.metrics}


def _grid_for(model: TrainedModel, lam_grid) -> list:
    dim = model.net.arch.lambda_dim
    if model.config.method == "baseline":
        grid = [model.training_lambda()] if lam_grid is None else [list(np.atleast_1d(g)) for g in lam_grid]
        if len(grid) != 1:
            raise ConfigError("a baseline model is evaluated at its training lambda only (singleton grid)")
    else:
        if lam_grid is None or len(lam_grid) == 0:
            raise ConfigError(f"{model.config.method} evaluation needs a lambda grid")
        grid = [list(np.atleast_1d(g)) for g in lam_grid]
    for g in grid:
        if len(g) != dim:
            raise ConfigError(f"evaluation lambda {g} has {len(g)} entries, model expects {dim}")
    return [[float(v) for v in g] for g in grid]


def evaluate(model: TrainedModel, ds: Dataset, lam_grid=None, *, threshold: float = 0.5,
             beta_f: float = 1.0, recall_grid=metrics.DEFAULT_RECALL_GRID) -> list[EvalReport]:
    """One report per evaluation lambda.

    ``ds`` must already be in the model's feature space (e.g. a test CSV
    loaded with the training standardizer).
    """
    grid = _grid_for(model, lam_grid)
    out = []
    cached = None
    for lam in grid:
        if model.film_enabled:
            fwd_lam = model.training_lambda() if model.config.method == "baseline" else lam
            scores = model.scores(ds.features, fwd_lam)
        else:
            if cached is None:
                cached = model.scores(ds.features)
            scores = cached
        scalars, roc, pr = metrics.report(metrics.ScoredSet(scores, ds.labels), threshold=threshold,
                                          beta_f=beta_f, recall_grid=recall_grid)
        out.append(EvalReport(lam, scalars, roc, pr))
    return out


@dataclass
class AveragedReport:
    lam: list | None
    metrics: dict
    per_seed: list
    curves: list = field(default_factory=list)


def seed_average(reports_by_seed: list[list[EvalReport]]) -> list[AveragedReport]:
    """Average each scalar metric over seeds, grid point by grid point."""
    if not reports_by_seed:
        raise ConfigError("need reports from at least one seed")
    grids = [[r.lam for r in reports] for reports in reports_by_seed]
    if any(g != grids[0] for g in grids):
        raise ConfigError("seeds were evaluated on different lambda grids")
    out = []
    for i, lam in enumerate(grids[0]):
        cells = [reports[i] for reports in reports_by_seed]
        keys = cells[0].metrics.keys()
        mean = {k: math.fsum(c.metrics[k] for c in cells) / len(cells) for k in keys}
        out.append(AveragedReport(lam, mean, [c.metrics for c in cells], [(c.roc, c.pr) for c in cells]))
    return out
