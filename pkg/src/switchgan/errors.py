"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A caller violated a documented precondition."""


class FormatError(IOError):
    """A file is not in the expected on-disk format."""


class NumericError(ArithmeticError):
    """Training produced a non-finite value and was aborted."""


class ConfigError(ValueError):
    """A run configuration is malformed or contains unknown keys."""
