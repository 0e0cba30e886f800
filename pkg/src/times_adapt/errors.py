"""Exception hierarchy shared by every module."""

from __future__ import annotations


class TimesAdaptError(Exception):
    """Base class; ``code`` is the machine-readable tag used by the CLI."""

    code = "error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class ResourceLimitError(TimesAdaptError):
    code = "resource_limit"


class ContractViolation(TimesAdaptError, ValueError):
    code = "contract_violation"


class DimensionMismatch(ContractViolation):
    code = "dimension_mismatch"


class AmbiguityError(TimesAdaptError):
    code = "ambiguous"


class InfiniteGapError(ContractViolation):
    code = "infinite_gap"


class UndefinedDirectionError(ContractViolation):
    code = "undefined_direction"


class TrainingQualityError(TimesAdaptError):
    code = "training_quality"


class PartialResultError(TimesAdaptError):
    """Raised when ADAPT hits ``max_layers``; ``model`` is the best model found."""

    code = "max_layers_reached"

    def __init__(self, message: str, model=None):
        super().__init__(message)
        self.model = model


class ConfigError(TimesAdaptError, ValueError):
    code = "config"
