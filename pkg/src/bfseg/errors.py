"""Exception types shared across the package."""


class BFSegError(Exception):
    """Base class for all package errors."""


class DimensionError(BFSegError, ValueError):
    """Array shapes are incompatible or not divisible by a required stride."""


class DomainError(BFSegError, ValueError):
    """Values fall outside the admissible range (e.g. a non-binary label)."""


class ConfigError(BFSegError, ValueError):
    """An invalid or inconsistent configuration."""


class DatasetError(BFSegError):
    """A dataset directory is malformed (missing pairs, bad sizes)."""


class TrainingDiverged(BFSegError, FloatingPointError):
    """The training objective became non-finite."""
