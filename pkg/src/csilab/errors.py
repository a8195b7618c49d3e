"""Exception types shared across csilab.

Plain ``ValueError`` is used for invalid arguments; the classes below mark
failures the CLI maps to dedicated exit codes.
"""


class ConfigError(ValueError):
    """A configuration file or sweep specification is unusable."""


class DecodeError(ValueError):
    """A bitstream could not be decoded (corrupt payload or wrong model)."""


class UndefinedChannelError(ValueError):
    """Combining was requested over an all-zero channel vector."""


class NumericalError(RuntimeError):
    """Training diverged or produced non-finite values."""
