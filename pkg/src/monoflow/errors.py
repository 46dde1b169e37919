"""Exception hierarchy shared by all monoflow modules."""


class MonoflowError(Exception):
    """Base class for every error raised by monoflow."""


class DimensionMismatch(MonoflowError, ValueError):
    pass


class NonSPD(MonoflowError, ValueError):
    pass


class NoConvergence(MonoflowError, RuntimeError):
    pass


class SingularPivot(MonoflowError, ZeroDivisionError):
    pass


class AsymmetricBlock(MonoflowError, ValueError):
    pass


class OutsideDomain(MonoflowError, ValueError):
    """Point lies outside ``D(A)``; ``distance`` is the distance to the domain."""

    def __init__(self, message, distance):
        super().__init__(message)
        self.distance = distance


class NewtonDiverged(MonoflowError, RuntimeError):
    def __init__(self, message, step, residual):
        super().__init__(message)
        self.step = step
        self.residual = residual


class IncompatibleInitialState(MonoflowError, ValueError):
    def __init__(self, message, distance):
        super().__init__(message)
        self.distance = distance


class SubproblemDiverged(MonoflowError, RuntimeError):
    def __init__(self, message, step, residual):
        super().__init__(message)
        self.step = step
        self.residual = residual


class CoercivityViolated(MonoflowError, ValueError):
    def __init__(self, message, min_eig):
        super().__init__(message)
        self.min_eig = min_eig


class SingularStep(MonoflowError, RuntimeError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class LineSearchFailed(MonoflowError, RuntimeError):
    pass


class ConfigError(MonoflowError, ValueError):
    pass
