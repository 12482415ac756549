"""Exception hierarchy shared by all hypiss modules."""


class HypissError(ValueError):
    """Base class for every error raised by hypiss."""


# model
class DimensionMismatch(HypissError):
    pass


class SpeedSignViolation(HypissError):
    pass


class SpeedCollision(HypissError):
    pass


class EvaluationFailure(HypissError):
    pass


class ExpressionError(HypissError):
    """Raised for expressions outside the supported grammar."""


# scaling / certifier
class NonPositiveDelta(HypissError):
    pass


class NonPositiveInit(HypissError):
    pass


class NonPositiveMu(HypissError):
    pass


class BlowUpPresent(HypissError):
    pass


class CertificationFailure(HypissError):
    """Neither the homogeneous nor the inhomogeneous route produced a certificate.

    Carries the best margins found so callers can report how far off they were.
    """

    def __init__(self, message, interior_margin=None, boundary_margin=None, mode=None):
        super().__init__(message)
        self.interior_margin = interior_margin
        self.boundary_margin = boundary_margin
        self.mode = mode

    def to_dict(self):
        return {
            "status": "failure",
            "message": str(self),
            "mode": self.mode,
            "interior_margin": self.interior_margin,
            "boundary_margin": self.boundary_margin,
        }


# planar
class BeyondBlowUp(HypissError):
    pass


class NonPositiveK(HypissError):
    pass


class NoWitnessFound(HypissError):
    pass


# sim
class CFLViolation(HypissError):
    pass


class CompatibilityViolation(HypissError):
    pass


class NonDiagonalQuasilinear(HypissError):
    pass


class HorizonMismatch(HypissError):
    pass


class OverflowUnavoidable(HypissError):
    pass
