class LctError(Exception):
    """Base class for lctlab errors."""


class ShapeError(LctError, ValueError):
    pass


class ConfigError(LctError, ValueError):
    pass


class InputError(LctError, ValueError):
    pass


class MetricUndefinedError(LctError, ValueError):
    pass


class TrainingDivergedError(LctError, RuntimeError):
    """Raised when a mini-batch loss turns NaN or infinite."""

    def __init__(self, message: str, *, epoch: int, batch: int, lam, grad_norm: float):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.lam = lam
        self.grad_norm = grad_norm
