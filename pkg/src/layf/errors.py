"""Exception taxonomy shared across the engine.

Categories map onto CLI exit codes: data/contract problems exit 3,
numeric failures exit 4, and I/O failures (plain OSError) exit 5.
"""


class LayfError(Exception):
    """Base class for all engine errors."""


class ContractError(LayfError):
    """A call violated an operation precondition (shape/label mismatch)."""


class ConfigError(LayfError):
    """A configuration object is internally inconsistent."""


class StateError(LayfError):
    """An object is in the wrong state for the requested operation."""


class UnseenClassError(LayfError):
    """A per-class statistic was requested for a class with zero samples."""


class NumericError(LayfError):
    """A numeric routine failed (non-finite values, indefinite system)."""


class UndefinedMetricError(LayfError):
    """The requested metric is undefined for the given task index."""


class FormatError(LayfError):
    """A file does not conform to the on-disk format."""


class UnsupportedVersionError(FormatError):
    """The file declares a format version newer than this reader."""


class CorruptionError(FormatError):
    """The file is structurally valid but its content is damaged."""
