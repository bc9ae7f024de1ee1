"""Exception types mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid configuration or parameter value (exit code 2)."""


class DataError(ValueError):
    """Malformed or degenerate input data (exit code 3)."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond recovery (exit code 4)."""
