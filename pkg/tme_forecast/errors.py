# tme_forecast/errors.py
"""Exception hierarchy shared by every module.

Each top-level family carries the process exit code the CLI returns for it:

- InputError (2): unreadable or inconsistent inputs
- TrainingError (3): fitting failed or produced invalid parameters
- EvaluationError (4): predictions cannot be scored
- AcceptanceFailure (1): a synthetic acceptance criterion failed
"""


class TmeForecastError(Exception):
    """Base class for all package errors."""

    exit_code: int = 1


# ============================================================
# Input errors (exit 2)
# ============================================================

class InputError(TmeForecastError):
    exit_code = 2


class RowError(InputError):
    """Error tied to a data row; rows count from 1, the header is row 0."""

    def __init__(self, line: int, message: str = ""):
        self.line = line
        detail = f": {message}" if message else ""
        super().__init__(f"{type(self).__name__} at row {line}{detail}")


class MalformedRow(RowError):
    pass


class NonMonotoneTimestamp(RowError):
    pass


class NonPositiveSize(RowError):
    pass


class CrossedBook(RowError):
    pass


class NoSnapshotBeforeGridStart(InputError):
    pass


class EmptySeasonalSlot(InputError):
    def __init__(self, slot: int):
        self.slot = slot
        super().__init__(f"Seasonal slot {slot} has no training volume")


class SourceGridMismatch(InputError):
    pass


class TooFewInstances(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class ConfigError(InputError):
    pass


# ============================================================
# Training errors (exit 3)
# ============================================================

class TrainingError(TmeForecastError):
    exit_code = 3


class DivergedLoss(TrainingError):
    pass


class NonPositiveTarget(TrainingError):
    pass


class LogNormalOverflow(TrainingError):
    pass


class NegativeVariance(LogNormalOverflow):
    """Mixture variance lost to cancellation between very large component means."""


class NonStationaryFit(TrainingError):
    pass


class OptimizerFailed(TrainingError):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(f"Optimizer failed: {reason}")


class AllFitsFailed(TrainingError):
    pass


class TooFewSamples(TrainingError):
    pass


class NonFiniteLoss(TrainingError):
    pass


# ============================================================
# Evaluation errors (exit 4)
# ============================================================

class EvaluationError(TmeForecastError):
    exit_code = 4


class EmptySet(EvaluationError):
    pass


class MissingLikelihood(EvaluationError):
    pass


class MissingSd(EvaluationError):
    pass


class ZeroTrueVolume(EvaluationError):
    pass


class IncompatibleManifest(EvaluationError):
    pass


# ============================================================
# Acceptance (exit 1)
# ============================================================

class AcceptanceFailure(TmeForecastError):
    exit_code = 1

    def __init__(self, failed: list[str]):
        self.failed = failed
        super().__init__(f"Failed criteria: {', '.join(failed)}")
