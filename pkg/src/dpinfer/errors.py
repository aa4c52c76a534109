"""Exception hierarchy shared by every module."""


class DPInferError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(DPInferError, ValueError):
    pass


class AbsoluteContinuityViolation(DPInferError, ValueError):
    pass


class InvalidParameter(DPInferError, ValueError):
    pass


class InvalidBudget(DPInferError, ValueError):
    pass


class TooLarge(DPInferError, ValueError):
    pass


class InsufficientSamples(DPInferError, ValueError):
    pass


class EmptyHistogram(DPInferError, ValueError):
    pass


class EmptyInput(DPInferError, ValueError):
    pass


class EmptyDataset(DPInferError, ValueError):
    pass


class GroupTooSmall(DPInferError, ValueError):
    pass


class ConfigError(DPInferError, ValueError):
    """Bad experiment config. ``field`` and ``line`` locate the problem when known."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class CalibrationFailed(DPInferError, RuntimeError):
    pass
