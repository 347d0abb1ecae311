"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes incompatible with the requested operation."""


class DataError(ValueError):
    """Malformed input data: bad file headers, manifests, checkpoints."""


class NumericError(ArithmeticError):
    """Numeric failure: NaN/Inf encountered where finite values are required."""
