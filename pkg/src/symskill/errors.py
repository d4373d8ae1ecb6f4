"""Error taxonomy shared across the package.

ConfigError maps to CLI exit code 2, NumericError to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid configuration, shapes, or registry declarations."""


class NumericError(RuntimeError):
    """Non-finite values or diverging internals; training must abort."""
