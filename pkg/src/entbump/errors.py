"""Exception types shared across the package."""


class EntbumpError(Exception):
    """Base class for all package errors."""


class ZeroMassAtom(EntbumpError):
    pass


class AdditivityViolation(EntbumpError):
    pass


class MidpointMismatch(EntbumpError):
    pass


class InvalidPath(EntbumpError):
    pass


class NotQuasiconcave(EntbumpError):
    pass


class DivisionByZero(EntbumpError):
    pass


class NonconvexYoung(EntbumpError):
    pass


class DivergentYoungTail(EntbumpError):
    pass


class NotConvexAfterTruncation(EntbumpError):
    pass


class FloorViolated(EntbumpError):
    pass


class NormalizationViolated(EntbumpError):
    pass


class PowerIterationStall(EntbumpError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class NotDecreasing(EntbumpError):
    pass


class DivergentPenalty(EntbumpError):
    pass


class ConvexityDataInvalid(EntbumpError):
    pass


class SingularPoint(EntbumpError):
    pass


class QuadratureFailure(EntbumpError):
    pass


class HypothesisViolated(EntbumpError):
    pass
