"""Exception hierarchy.

``UsageError`` maps to CLI exit code 1, ``DataError`` (and subclasses) to 2.
"""


class VCProbeError(Exception):
    pass


class UsageError(VCProbeError, ValueError):
    """Bad arguments or configuration."""


class DataError(VCProbeError, ValueError):
    """Input data violates a precondition."""


class AudioFormatError(DataError):
    pass


class ShapeError(DataError):
    pass


class NoVoicedFramesError(DataError):
    pass


class TrainingDivergedError(VCProbeError, FloatingPointError):
    pass
