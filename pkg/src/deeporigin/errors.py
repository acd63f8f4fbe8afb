"""Exception types shared across the package.

Everything user-facing derives from ValueError so callers can catch broadly;
the CLI maps these to the "data error" exit code.
"""


class DimensionError(ValueError):
    """Array shapes do not line up for the requested operation."""


class ConfigError(ValueError):
    """A configuration value violates its documented constraints."""


class DataError(ValueError):
    """Input data is empty, malformed, or inconsistent."""


class ModelFormatError(ValueError):
    """A serialized model document cannot be used."""


class VersionError(ModelFormatError):
    """Document was written by an incompatible format version."""


class TruncatedError(ModelFormatError):
    """Document is incomplete or unparseable."""


class ChecksumError(ModelFormatError):
    """Parameter section checksum does not match its contents."""


class ShapeError(ModelFormatError):
    """Stored parameter arrays disagree with the declared layer shapes."""
