"""Exception hierarchy shared by every stage of the pipeline."""


class StsError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(StsError, ValueError):
    """An input file could not be parsed."""


class IntegrityError(StsError):
    """Parsed data violates an invariant (ordering, box convention, ...)."""


class DegenerateInputError(StsError):
    """Input is well-formed but too small or empty for the operation."""


class ConfigurationError(StsError):
    """A configuration object or argument is inconsistent."""


class ShapeError(StsError, ValueError):
    """Array shapes do not agree."""


class TrainingError(StsError):
    """Training hit a non-finite value."""


class NoVarianceError(StsError):
    """A statistic is undefined because a series has zero variance."""


class StageError(StsError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
