"""Exception hierarchy shared by all modules."""


class ObserverError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(ObserverError, ValueError):
    def __init__(self, first: str, second: str, detail: str = ""):
        self.pair = (first, second)
        msg = f"dimension mismatch between {first} and {second}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NonvanishingOrigin(ObserverError, ValueError):
    pass


class EmptyRegion(ObserverError, ValueError):
    pass


class NotPositiveDefinite(ObserverError, ValueError):
    pass


class NonpositiveWeight(ObserverError, ValueError):
    pass


class LambdaOutOfRange(ObserverError, ValueError):
    pass


class ShapeMismatch(ObserverError, ValueError):
    pass


class PreconditionViolated(ObserverError, ValueError):
    pass


class ZeroDisturbance(ObserverError, ValueError):
    pass


class NonFiniteState(ObserverError, ArithmeticError):
    def __init__(self, t: float):
        self.t = t
        super().__init__(f"state became non-finite at t={t:.6g}")


class Infeasible(ObserverError):
    """The LMI problem has no solution (or none was found).

    ``report`` carries the :class:`~hinf_observer.sdp.SolveReport` and
    ``blocking`` names the constraint with the worst residual, if known.
    """

    def __init__(self, message: str, report=None, blocking: str | None = None):
        self.report = report
        self.blocking = blocking
        super().__init__(message)


class NumericalFailure(ObserverError):
    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)
