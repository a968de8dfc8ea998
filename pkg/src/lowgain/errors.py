"""Exception hierarchy shared by every module."""


class LowGainError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(LowGainError, ValueError):
    pass


class NotHurwitz(LowGainError):
    pass


class SingularSolve(LowGainError):
    pass


class EigFailure(LowGainError):
    pass


class SingularAtFrequency(LowGainError):
    def __init__(self, omega: float):
        super().__init__(f"resolvent singular at omega={omega:g}")
        self.omega = omega


class RankDeficiencyAfterRetries(LowGainError):
    pass


class RankDeficient(LowGainError):
    pass


class InvalidWeight(LowGainError, ValueError):
    pass


class Infeasible(LowGainError):
    """No certificate exists (or the solver proved infeasibility)."""

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class StructureTooRestrictive(Infeasible):
    pass


class NumericalFailure(LowGainError):
    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class NoFeasibleGamma(LowGainError):
    pass


class JacobianEvalFailure(LowGainError):
    def __init__(self, point, cause: Exception):
        super().__init__(f"jacobian evaluation failed at {point!r}: {cause}")
        self.point = point
        self.__cause__ = cause


class FixedPointDivergence(LowGainError):
    pass


class SingularBasis(LowGainError):
    pass


class DualUnavailable(LowGainError):
    pass


class DualConeInvalid(LowGainError):
    pass


class SectorViolation(LowGainError):
    pass


class NonFiniteState(LowGainError):
    def __init__(self, t: float):
        super().__init__(f"non-finite state at t={t:g}")
        self.t = t


class StepSizeUnderflow(LowGainError):
    def __init__(self, t: float, message: str = ""):
        super().__init__(f"step size underflow at t={t:g} {message}".rstrip())
        self.t = t


class ZeroDenominator(LowGainError):
    pass


class NoCrossover(LowGainError):
    pass
