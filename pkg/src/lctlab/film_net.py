"""A small ReLU MLP with one FiLM block before the linear head.

Layout, with ``x`` as row vectors::

    h_1 = relu(x W_1 + b_1), ..., f = relu(h_k W_c + b_c)      # f has C channels
    [sigma, mu] = relu(lam G_1 + g_1) G_2 + g_2                # FiLM generator
    z = (sigma * f + mu) W_out + b_out                         # z = (z_minus, z_plus)

Every weight lives in one flat float64 vector ``theta``; named arrays are
views into it. Parameter count::

    sum_i (d_i * d_{i+1} + d_{i+1})            trunk, d_0 = input_dim, d_last = C
    + lam_dim * H + H + H * 2C + 2C            FiLM generator, H = film_hidden
    + 2C + 2                                   head
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .ndmath import Rng

CHECKPOINT_FORMAT = "lctlab.film_mlp"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    lambda_dim: int
    hidden: tuple[int, ...] = (32, 32)
    channels: int = 16
    film_hidden: int = 128

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if min((self.input_dim, self.lambda_dim, self.channels, self.film_hidden) + self.hidden) < 1:
            raise ConfigError(f"all layer widths must be positive: {self}")

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        widths = (self.input_dim,) + self.hidden + (self.channels,)
        out: list[tuple[str, tuple[int, ...]]] = []
        for i in range(len(widths) - 1):
            out.append((f"trunk.{i}.w", (widths[i], widths[i + 1])))
            out.append((f"trunk.{i}.b", (widths[i + 1],)))
        c, h = self.channels, self.film_hidden
        out += [
            ("film.0.w", (self.lambda_dim, h)),
            ("film.0.b", (h,)),
            ("film.1.w", (h, 2 * c)),
            ("film.1.b", (2 * c,)),
            ("head.w", (c, 2)),
            ("head.b", (2,)),
        ]
        return out

    @property
    def n_trunk(self) -> int:
        return len(self.hidden) + 1

    def n_params(self) -> int:
        return sum(math.prod(shape) for _, shape in self.layout())


@dataclass
class ForwardTape:
    x: np.ndarray
    lam: np.ndarray | None
    acts: list[np.ndarray]            # input plus post-ReLU trunk outputs
    film_hidden: np.ndarray | None    # post-ReLU generator hidden layer
    sigma: np.ndarray | None
    modulated: np.ndarray
    version: int
    net_id: int
    consumed: bool = field(default=False)


class FilmMlp:
    def __init__(self, arch: Architecture, theta: np.ndarray | None = None):
        self.arch = arch
        self._layout = arch.layout()
        self.theta = np.zeros(arch.n_params(), dtype=np.float64)
        self.params: dict[str, np.ndarray] = {}
        self.slices: dict[str, slice] = {}
        off = 0
        for name, shape in self._layout:
            size = math.prod(shape)
            self.slices[name] = slice(off, off + size)
            self.params[name] = self.theta[off:off + size].reshape(shape)
            off += size
        self._version = 0
        if theta is not None:
            self.set_theta(theta)

    @classmethod
    def init(cls, arch: Architecture, rng: Rng) -> "FilmMlp":
        """He-uniform trunk/head; generator output starts at sigma=1, mu=0."""
        net = cls(arch)
        for name, shape in net._layout:
            if name.endswith(".w") and name != "film.1.w":
                limit = math.sqrt(6.0 / shape[0])
                net.params[name][...] = ((2.0 * rng.uniform(math.prod(shape)) - 1.0) * limit).reshape(shape)
        net.params["film.1.b"][: arch.channels] = 1.0
        return net

    def set_theta(self, theta) -> None:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != self.theta.shape:
            raise ShapeError(f"theta has shape {theta.shape}, expected {self.theta.shape}")
        self.theta[...] = theta
        self._version += 1

    def film_slice(self) -> slice:
        return slice(self.slices["film.0.w"].start, self.slices["film.1.b"].stop)

    def modulation(self, lam) -> tuple[np.ndarray, np.ndarray]:
        """``(sigma, mu)`` produced by the generator for ``lam``."""
        lam = self._lambda(lam, 1)
        g = np.maximum(lam @ self.params["film.0.w"] + self.params["film.0.b"], 0.0)
        out = g @ self.params["film.1.w"] + self.params["film.1.b"]
        c = self.arch.channels
        return out[..., :c], out[..., c:]

    def _lambda(self, lam, n_rows: int) -> np.ndarray:
        lam = np.asarray(lam, dtype=np.float64)
        if lam.ndim <= 1:
            lam = lam.reshape(1, -1)
        if lam.shape[1] != self.arch.lambda_dim or lam.shape[0] not in (1, n_rows):
            raise ShapeError(f"lambda shape {lam.shape} incompatible with lambda_dim={self.arch.lambda_dim}")
        return lam

    def forward(self, x, lam=None, film_enabled: bool = True) -> tuple[np.ndarray, ForwardTape]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.arch.input_dim:
            raise ShapeError(f"features shape {x.shape} does not match input_dim={self.arch.input_dim}")
        p = self.params
        acts = [x]
        a = x
        for i in range(self.arch.n_trunk):
            a = np.maximum(a @ p[f"trunk.{i}.w"] + p[f"trunk.{i}.b"], 0.0)
            acts.append(a)
        g = sigma = None
        lam_arr = None
        if film_enabled:
            if lam is None:
                raise ShapeError("lambda is required when FiLM is enabled")
            lam_arr = self._lambda(lam, x.shape[0])
            g = np.maximum(lam_arr @ p["film.0.w"] + p["film.0.b"], 0.0)
            out = g @ p["film.1.w"] + p["film.1.b"]
            c = self.arch.channels
            sigma = out[:, :c]
            modulated = sigma * a + out[:, c:]
        else:
            modulated = a
        z = modulated @ p["head.w"] + p["head.b"]
        tape = ForwardTape(x, lam_arr, acts, g, sigma, modulated, self._version, id(self))
        return z, tape

    def backward(self, tape: ForwardTape, dz) -> np.ndarray:
        """Gradient w.r.t. ``theta`` given ``dz``, the objective's gradient w.r.t. the logits."""
        if tape.consumed or tape.net_id != id(self) or tape.version != self._version:
            raise RuntimeError("forward tape is stale or belongs to another network")
        tape.consumed = True
        dz = np.asarray(dz, dtype=np.float64)
        if dz.shape != (tape.x.shape[0], 2):
            raise ShapeError(f"logit gradient shape {dz.shape} does not match batch {tape.x.shape[0]}")
        p = self.params
        grad = np.zeros_like(self.theta)
        gv = {name: grad[s].reshape(p[name].shape) for name, s in self.slices.items()}

        gv["head.w"][...] = tape.modulated.T @ dz
        gv["head.b"][...] = dz.sum(axis=0)
        d_mod = dz @ p["head.w"].T
        f = tape.acts[-1]
        if tape.sigma is not None:
            shared = tape.lam.shape[0] == 1
            d_sigma = d_mod * f
            d_mu = d_mod
            if shared:
                d_sigma = d_sigma.sum(axis=0, keepdims=True)
                d_mu = d_mu.sum(axis=0, keepdims=True)
            d_out = np.concatenate([d_sigma, d_mu], axis=1)
            gv["film.1.w"][...] = tape.film_hidden.T @ d_out
            gv["film.1.b"][...] = d_out.sum(axis=0)
            d_g = (d_out @ p["film.1.w"].T) * (tape.film_hidden > 0)
            gv["film.0.w"][...] = tape.lam.T @ d_g
            gv["film.0.b"][...] = d_g.sum(axis=0)
            d_a = d_mod * tape.sigma
        else:
            d_a = d_mod
        for i in reversed(range(self.arch.n_trunk)):
            d_pre = d_a * (tape.acts[i + 1] > 0)
            gv[f"trunk.{i}.w"][...] = tape.acts[i].T @ d_pre
            gv[f"trunk.{i}.b"][...] = d_pre.sum(axis=0)
            if i:
                d_a = d_pre @ p[f"trunk.{i}.w"].T
        return grad

    def logits(self, x, lam=None, film_enabled: bool = True) -> np.ndarray:
        return self.forward(x, lam, film_enabled)[0]

    def to_dict(self) -> dict:
        arch = asdict(self.arch)
        arch["hidden"] = list(arch["hidden"])
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "architecture": arch,
            "n_params": int(self.theta.size),
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FilmMlp":
        if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint {data.get('format')!r} v{data.get('version')}")
        arch = Architecture(**data["architecture"])
        return cls(arch, np.array(data["theta"], dtype=np.float64))


def predict(z, t: float = 0.0):
    """``1`` (+) where ``z_plus > z_minus + t``, else ``0`` (-)."""
    z = np.asarray(z, dtype=np.float64)
    out = (z[..., 1] > z[..., 0] + t).astype(np.int64)
    return int(out) if out.ndim == 0 else out
