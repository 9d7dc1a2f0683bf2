"""Exception hierarchy shared across the package."""

from __future__ import annotations


class LaborcastError(Exception):
    """Base class for all package errors."""


class DimensionError(LaborcastError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(LaborcastError, ValueError):
    """A function precondition was violated."""


class WindowError(DimensionError):
    """A window/kernel is longer than the sequence it slides over."""


class DataError(LaborcastError):
    """Input data is missing, empty or otherwise unusable."""


class InsufficientDataError(DataError):
    pass


class DegenerateFeatureError(DataError):
    """A feature has zero variance over the normalization span."""

    def __init__(self, feature: str):
        super().__init__(f"feature {feature!r} is constant over the statistics span")
        self.feature = feature


class DivergenceError(LaborcastError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, last_finite_loss: float | None):
        super().__init__(
            f"non-finite loss at epoch {epoch} (last finite loss: {last_finite_loss})"
        )
        self.epoch = epoch
        self.last_finite_loss = last_finite_loss


class TransportError(LaborcastError):
    def __init__(self, message: str, retries: int):
        super().__init__(f"{message} (after {retries} retries)")
        self.retries = retries


class RemoteError(LaborcastError):
    """The BLS API answered with a non-success status."""


class ParseError(LaborcastError):
    pass


class RankingError(LaborcastError, ValueError):
    pass


class JoinError(LaborcastError, KeyError):
    def __init__(self, missing_left: set[str], missing_right: set[str]):
        super().__init__(
            f"industry sets differ: only in ranks={sorted(missing_right)}, "
            f"only in errors={sorted(missing_left)}"
        )
        self.missing_left = missing_left
        self.missing_right = missing_right

    def __str__(self) -> str:
        return self.args[0]


class UndefinedCorrelationError(LaborcastError, ValueError):
    """Correlation requested for an input with zero rank variance."""


class ConfigError(LaborcastError):
    """Invalid or incomplete run configuration (CLI exit code 2)."""


class CheckpointError(LaborcastError):
    pass
