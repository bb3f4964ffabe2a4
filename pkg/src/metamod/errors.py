"""Exception hierarchy. Every error raised on purpose derives from MetamodError."""


class MetamodError(Exception):
    pass


class ConfigError(MetamodError):
    """Invalid configuration. `field` names the offending field path when known."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class ShapeError(MetamodError):
    """Dimension mismatch between arrays, architectures or structures."""


class DomainError(MetamodError):
    """Argument outside the mathematical domain (empty dataset, T <= 0, ...)."""


class NumericError(MetamodError):
    """Non-finite values where finite ones are required."""


class UnknownModuleError(MetamodError, KeyError):
    """Module id not present in the pool."""

    def __str__(self):
        return MetamodError.__str__(self)


class CapacityError(MetamodError):
    """Enumeration would exceed the caller-supplied cap."""


class FormatError(MetamodError):
    """Malformed or truncated serialized artifact."""


class VersionError(MetamodError):
    """Serialized artifact from an unknown schema version or vocabulary."""


class IngestionError(MetamodError):
    """CSV suite ingestion failure; message names the file and the problem."""


class DegenerateDataError(MetamodError):
    """Data unusable for the requested statistic (e.g. zero target variance)."""


class UsageError(MetamodError):
    """Bad command-line invocation."""
