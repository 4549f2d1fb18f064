"""Exception hierarchy.

Each family carries the process exit code the CLI uses for it.
"""

from __future__ import annotations


class GlucoscopeError(Exception):
    exit_code = 1


class ConfigError(GlucoscopeError):
    exit_code = 3


# cgm data
class DataError(GlucoscopeError):
    exit_code = 4


class MalformedRow(DataError):
    def __init__(self, line: int, reason: str = "") -> None:
        self.line = line
        msg = f"malformed row at line {line}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class DuplicateTimestamp(DataError):
    pass


class EmptySeries(DataError):
    pass


class PreconditionError(DataError):
    pass


# windowing
class WindowingError(GlucoscopeError):
    exit_code = 5


class SeriesTooShort(WindowingError):
    pass


class EmptyLookahead(WindowingError):
    pass


# transforms
class TransformError(GlucoscopeError):
    exit_code = 6


class ScaleOutOfRange(TransformError):
    pass


class ValueOutOfRange(TransformError):
    pass


class NonFiniteInput(TransformError):
    pass


# layers and models
class ModelError(GlucoscopeError):
    exit_code = 7


class ShapeMismatch(ModelError):
    pass


class BatchTooSmall(ModelError):
    pass


class InvalidOneHot(ModelError):
    pass


class IncompatibleGeometry(ModelError):
    pass


class VersionMismatch(ModelError):
    pass


class CorruptCheckpoint(ModelError):
    pass


# training
class TrainingError(GlucoscopeError):
    exit_code = 8


class EmptyDataset(TrainingError):
    pass


# statistics
class StatsError(GlucoscopeError):
    exit_code = 9


class SampleTooSmall(StatsError):
    pass


class SampleTooLarge(StatsError):
    pass


class DegenerateSample(StatsError):
    pass


class InvalidDegreesOfFreedom(StatsError):
    pass


EXIT_CODES = {
    "usage": 2,
    "config": ConfigError.exit_code,
    "data": DataError.exit_code,
    "windowing": WindowingError.exit_code,
    "transform": TransformError.exit_code,
    "model": ModelError.exit_code,
    "training": TrainingError.exit_code,
    "stats": StatsError.exit_code,
    "io": 10,
}
