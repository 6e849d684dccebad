"""Exception types shared across the package."""


class UnlearnAuditError(Exception):
    """Base class for all package errors."""


class ShapeError(UnlearnAuditError):
    """Tensor or layer dimensions do not line up."""


class LabelError(UnlearnAuditError):
    """A label is out of range or otherwise invalid."""


class ParseError(UnlearnAuditError):
    """A data file could not be parsed; message names the offending line."""


class SplitError(UnlearnAuditError):
    """A split plan produced an empty or inconsistent part."""


class SizingError(UnlearnAuditError):
    """A pool or dataset is too small for the requested scheme."""


class ConfigError(UnlearnAuditError):
    """An experiment or method configuration is invalid."""


class TrainingDivergedError(UnlearnAuditError):
    """Loss became NaN; the run is aborted rather than silently continued."""


class PhaseError(UnlearnAuditError):
    """An experiment phase failed; carries the phase name and the cause."""

    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"phase '{phase}' failed: {cause}")
        self.phase = phase
        self.cause = cause
