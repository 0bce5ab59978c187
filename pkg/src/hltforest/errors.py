"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: usage problems exit 1,
:class:`DataError` exits 2, anything else exits 3.
"""


class DataError(ValueError):
    """Input data violates a documented contract (unreadable, empty,
    malformed beyond tolerance, or structurally invalid)."""


class ConfigError(ValueError):
    """A parameter value is outside its documented domain."""
