"""Exception hierarchy shared by all modules."""


class KextError(Exception):
    """Base class for all library errors."""


class DegenerateGradient(KextError):
    pass


class OutsideCollar(KextError):
    pass


class NonPositiveEpsilon(KextError):
    pass


class LevelOutOfRange(KextError):
    pass


class ZeroPolynomial(KextError):
    """The polynomial vanishes identically (e.g. the line lies in X)."""


LineInVariety = ZeroPolynomial


class ContinuationAmbiguous(KextError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class TransversalityViolated(KextError):
    """A ball fails the singularity-distance precondition for sheet tracking."""


class CoincidentNodes(KextError):
    pass


class OffVarietyNode(KextError):
    pass


class RadiusTooSmall(KextError):
    pass


class QuadratureBudgetExceeded(KextError):
    pass


class InsufficientTail(KextError):
    pass


class OutsideCoveredShell(KextError):
    pass


class StepUnderflow(KextError):
    pass


class ConfigError(KextError):
    pass
