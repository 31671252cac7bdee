"""Exception hierarchy shared by every module of the package."""


class SoftTorusError(ValueError):
    """Base class for all domain errors raised by softtorus."""


class NotHermitian(SoftTorusError):
    pass


class NotUnitary(SoftTorusError):
    pass


class SingularInput(SoftTorusError):
    pass


class SpectrumOnCut(SoftTorusError):
    """An eigenvalue sits on (or too close to) the cut of the chosen log branch."""


class GapTooSmall(SoftTorusError):
    """The spectrum of e(u, v) comes too close to 1/2 for a well-defined projection."""


class NotCentral(SoftTorusError):
    pass


class NotCentralPower(SoftTorusError):
    pass


class RootMismatch(SoftTorusError):
    pass


class RelationViolation(SoftTorusError):
    pass


class NotDivisible(SoftTorusError):
    pass


class DecompositionFailed(SoftTorusError):
    pass


class Infeasible(SoftTorusError):
    """The target angle is obstructed by the winding number of the input pair."""

    def __init__(self, message, obstruction=None, divisible=True):
        super().__init__(message)
        self.obstruction = obstruction
        self.divisible = divisible


class IrrationalTarget(SoftTorusError):
    pass
