"""Exception types shared across the package."""


class AhmError(Exception):
    """Base class for all library errors."""


class InvalidArgument(AhmError, ValueError):
    pass


class NumericalError(AhmError, ArithmeticError):
    pass


class StiffnessError(NumericalError):
    pass


class CapacityError(AhmError, MemoryError):
    pass


class CalibrationError(AhmError):
    pass


class DegeneracyError(AhmError, ValueError):
    pass


class LabelingError(AhmError):
    pass


class AdiabaticityError(AhmError):
    pass


class FitError(AhmError):
    pass


class BracketError(FitError):
    pass


class ConfigError(AhmError, ValueError):
    pass


class CliffordError(AhmError):
    pass
