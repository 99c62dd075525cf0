"""Exception types shared across the package."""


class SweepSenseError(Exception):
    """Base class for all package errors."""


class ConfigError(SweepSenseError, ValueError):
    """A configuration object violates one of its invariants."""


class ValidationError(SweepSenseError, ValueError):
    """An argument is well-formed but not allowed (e.g. target outside candidate set)."""


class ContractError(SweepSenseError, ValueError):
    """A function precondition on shapes or lengths was not met."""


class DataError(SweepSenseError, ValueError):
    """A dataset split is empty or lacks classes required for training."""


class BuildError(SweepSenseError):
    """Dataset construction could not satisfy its balance contract."""


class FormatError(SweepSenseError):
    """A file on disk does not match the expected format."""


class VersionError(FormatError):
    """File carries an unsupported format version."""


class CorruptFileError(FormatError):
    """File is truncated or otherwise unreadable."""
