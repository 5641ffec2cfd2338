"""
Exception hierarchy for respscope.

Two families fix the CLI exit code: ValidationFailure -> 1, DataIOError -> 2.
"""


class RespscopeError(Exception):
    """Base class for all project errors"""

    exit_code = 1


class ValidationFailure(RespscopeError, ValueError):
    """Input, config or numerical state violates a contract"""

    exit_code = 1


class DataIOError(RespscopeError, OSError):
    """A file or directory could not be read or written"""

    exit_code = 2


class ConfigError(ValidationFailure):
    pass


class AnnotationError(ValidationFailure):
    """An event annotation is out of range or malformed"""


class LabelError(ValidationFailure, TypeError):
    """A label does not belong to the label space of the requested task"""


class ShapeError(ValidationFailure):
    pass


class MetricUndefinedError(ValidationFailure):
    """SE or SP has an empty denominator"""


class TrainingDivergedError(ValidationFailure):
    """A loss became NaN/Inf during training"""

    def __init__(self, message: str, batch_index: int):
        super().__init__(message)
        self.batch_index = batch_index


class SelfCheckFailure(ValidationFailure):
    pass


class ManifestError(DataIOError):
    """Annotation file unreadable or malformed"""


class WavFormatError(DataIOError):
    pass


class FeatureStoreError(DataIOError):
    pass


class CheckpointError(DataIOError):
    pass
