"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific class that applies.
"""


class ShapeError(ValueError):
    """Operand dimensions are incompatible with the requested operation."""


class ContractError(ValueError):
    """A caller violated an API precondition (e.g. non-scalar loss node)."""


class ConfigError(ValueError):
    """A configuration value is outside its documented range."""


class ValidationError(ValueError):
    """On-disk data failed validation (bad shape, non-binary entry, ...)."""
