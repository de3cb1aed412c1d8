"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bitwidth, group size, topology name, matrix shape."""


class DataError(ValueError):
    """Invalid payload data: non-finite values, length mismatch."""


class CodeRangeError(DataError):
    """A quantized code does not fit the configured bitwidth."""


class DecodeFormatError(ValueError):
    """Serialized bytes are malformed, truncated, or internally inconsistent."""


class NotApplicableError(RuntimeError):
    """The operation needs topology features that are absent (e.g. a NUMA bridge)."""
