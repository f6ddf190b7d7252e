"""Exception hierarchy shared by every module of the package."""


class LiesysError(Exception):
    """Base class for all package errors."""


class MissingCoordinateError(LiesysError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"no value supplied for coordinate {self.name!r}"


class ChartMismatchError(LiesysError, ValueError):
    pass


class DegreeError(LiesysError, ValueError):
    pass


class DegeneratePointError(LiesysError, ArithmeticError):
    pass


class IllConditionedError(LiesysError, ArithmeticError):
    pass


class ClosureError(LiesysError, ArithmeticError):
    """A basis was assumed closed under brackets but is not."""


class ProjectabilityError(LiesysError, ValueError):
    pass


class ConnectionCheckError(LiesysError, ValueError):
    pass


class SolverError(LiesysError, ArithmeticError):
    pass


class StepUnderflowError(SolverError):
    pass


class NonFiniteStateError(SolverError):
    pass


class TooFewNodesError(LiesysError, ValueError):
    pass


class ModelError(LiesysError):
    pass


class UnknownModelError(ModelError, KeyError):
    pass


class ModelVerificationError(ModelError):
    pass


class ConfigError(LiesysError, ValueError):
    pass
