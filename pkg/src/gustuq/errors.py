"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class ContractError(ValueError):
    """A caller violated an operation's contract (e.g. non-scalar output)."""


class NumericError(ArithmeticError):
    """A computation produced non-finite or numerically unusable values."""


class ConfigError(ValueError):
    """A run configuration file or value is invalid."""


class DataMismatchError(ValueError):
    """Dataset and model artifacts do not fit together (dims, formats)."""
