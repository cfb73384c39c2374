"""Exception types shared across the package."""


class PosrError(Exception):
    """Base class for all package errors."""


class DimensionError(PosrError, ValueError):
    """Tensor or image extents are incompatible with an operation."""


class ContractError(PosrError, ValueError):
    """A documented precondition was violated."""


class NumericalError(PosrError, FloatingPointError):
    """A NaN or infinity showed up where only finite values are allowed."""


class ConfigError(PosrError, ValueError):
    """Invalid training or evaluation configuration."""
