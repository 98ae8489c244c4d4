"""Exception types shared across the package."""


class AkanError(Exception):
    """Base class for package-specific failures."""


class StructuralError(AkanError):
    """Shape, dimension, or layout violates a declared invariant."""


class RangeViolationError(AkanError):
    """A voltage lies outside its electrode's operating interval."""


class CheckpointError(AkanError):
    """Base class for checkpoint parse failures."""


class SchemaVersionError(CheckpointError):
    """Checkpoint header is missing or declares an unsupported version."""


class TruncatedCheckpointError(CheckpointError):
    """Checkpoint ends before all declared content was read."""


class NonFiniteValueError(AkanError):
    """A NaN or infinity appeared where a finite value is required."""


class ConfigError(AkanError):
    """A run configuration file is malformed or inconsistent."""


class DataSchemaError(AkanError):
    """A tabular data file does not match its declared schema."""


class DeviceLinkError(AkanError):
    """The remote measurement protocol failed mid-conversation."""
