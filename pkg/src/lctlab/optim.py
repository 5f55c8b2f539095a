"""Optimizers over flat parameter vectors.

Each optimizer exposes ``step(theta, grad) -> theta`` for a single update
and ``update(theta, loss_and_grad) -> (theta, loss, grad_norm)`` which
evaluates the closure, clips, and steps. ``Sam`` wraps either of the other
two and calls the closure twice per update.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigError, ShapeError

LossAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


def grad_norm(g: np.ndarray) -> float:
    return float(np.sqrt(np.dot(g, g)))


def clip_grad(g: np.ndarray, max_norm: float | None) -> np.ndarray:
    """Rescale ``g`` onto the ball of radius ``max_norm`` if it lies outside."""
    if max_norm is None:
        return g
    if max_norm <= 0:
        raise ConfigError(f"max_norm must be positive, got {max_norm}")
    norm = grad_norm(g)
    if norm > max_norm:
        return g * (max_norm / norm)
    return g


class _Base:
    clip_norm: float | None = None

    def step(self, theta: np.ndarray, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def update(self, theta: np.ndarray, loss_and_grad: LossAndGrad):
        loss, g = loss_and_grad(theta)
        norm = grad_norm(g)
        return self.step(theta, clip_grad(g, self.clip_norm)), loss, norm

    @staticmethod
    def _check(theta, g):
        if theta.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameters {theta.shape}")


class Sgd(_Base):
    """Heavy-ball SGD: ``v <- m v + g``, ``theta <- theta - lr v``."""

    def __init__(self, lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
                 clip_norm: float | None = None):
        if lr <= 0 or not 0 <= momentum < 1:
            raise ConfigError(f"need lr > 0 and momentum in [0, 1), got lr={lr}, momentum={momentum}")
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.velocity: np.ndarray | None = None

    def step(self, theta, g):
        theta = np.asarray(theta, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        self._check(theta, g)
        if self.weight_decay:
            g = g + self.weight_decay * theta
        if self.velocity is None:
            self.velocity = np.zeros_like(theta)
        self.velocity = self.momentum * self.velocity + g
        return theta - self.lr * self.velocity


class Adam(_Base):
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.0, clip_norm: float | None = None):
        if lr <= 0 or not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ConfigError("invalid Adam hyperparameters")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, theta, g):
        theta = np.asarray(theta, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        self._check(theta, g)
        if self.weight_decay:
            g = g + self.weight_decay * theta
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sam(_Base):
    """Sharpness-aware wrapper around ``Sgd`` or ``Adam``.

    The ascent step is ``eps = rho * g / ||g||``; the inner optimizer then
    steps from ``theta`` using the gradient taken at ``theta + eps``. Both
    gradients are clipped with the inner optimizer's ``clip_norm``.
    """

    def __init__(self, inner: Sgd | Adam, rho: float = 0.1):
        if rho < 0:
            raise ConfigError(f"rho must be >= 0, got {rho}")
        self.inner = inner
        self.rho = rho

    @property
    def lr(self):
        return self.inner.lr

    @lr.setter
    def lr(self, value):
        self.inner.lr = value

    def step(self, theta, g):
        return self.inner.step(theta, g)

    def update(self, theta, loss_and_grad):
        theta = np.asarray(theta, dtype=np.float64)
        loss, g = loss_and_grad(theta)
        norm = grad_norm(g)
        g = clip_grad(g, self.inner.clip_norm)
        if self.rho > 0 and norm > 0:
            eps = g * (self.rho / grad_norm(g))
            _, g = loss_and_grad(theta + eps)
            g = clip_grad(g, self.inner.clip_norm)
        return self.inner.step(theta, g), loss, norm


def sgd_step(state: Sgd, theta, g):
    return state.step(theta, g)


def adam_step(state: Adam, theta, g):
    return state.step(theta, g)


def sam_step(cfg: Sam, theta, loss_and_grad: LossAndGrad):
    return cfg.update(theta, loss_and_grad)[0]


def make_optimizer(name: str, *, lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
                   clip_norm: float | None = 0.5, rho: float = 0.1, sam: bool = False):
    if name == "sgd":
        opt = Sgd(lr, momentum=momentum, weight_decay=weight_decay, clip_norm=clip_norm)
    elif name == "adam":
        opt = Adam(lr, weight_decay=weight_decay, clip_norm=clip_norm)
    else:
        raise ConfigError(f"unknown optimizer {name!r}; expected 'sgd' or 'adam'")
    return Sam(opt, rho) if sam else opt
