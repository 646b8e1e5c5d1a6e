"""Exception hierarchy shared across the package."""


class TESKDError(Exception):
    """Base class for all package errors."""


class ShapeError(TESKDError, ValueError):
    pass


class DomainError(TESKDError, ValueError):
    pass


class ConfigError(TESKDError, ValueError):
    """A configuration value violates one of its invariants."""


class UnsupportedArchitectureError(TESKDError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class IngestionError(TESKDError, OSError):
    pass


class IncompatibleCheckpointError(TESKDError):
    pass


class NonFiniteLossError(TESKDError, FloatingPointError):
    """Raised when a loss term becomes NaN or infinite during training."""

    def __init__(self, term, value, epoch=None, step=None):
        self.term = term
        self.value = value
        self.epoch = epoch
        self.step = step
        where = "" if epoch is None else f" at epoch {epoch}, step {step}"
        super().__init__(f"non-finite loss term '{term}' = {value}{where}")
