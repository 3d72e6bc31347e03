"""Exception hierarchy shared by every neurostream module."""


class NeurostreamError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(NeurostreamError, ValueError):
    exit_code = 1


class DataError(NeurostreamError, ValueError):
    exit_code = 2


class SchemaError(DataError):
    pass


class ParseError(DataError):
    pass


class LabelError(DataError):
    pass


class StructureError(DataError):
    pass


class LengthError(DataError):
    pass


class IntervalError(DataError):
    pass


class CompatibilityError(DataError):
    pass


class ShapeError(NeurostreamError, ValueError):
    # raised for inputs too short or wide for the model, hence a data error
    exit_code = 2


class NumericalError(NeurostreamError, ArithmeticError):
    exit_code = 3


class OptimizerError(NumericalError):
    pass


class TargetError(NeurostreamError, ValueError):
    exit_code = 2
