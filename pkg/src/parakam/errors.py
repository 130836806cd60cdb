"""Exception types shared across the package."""


class ParakamError(Exception):
    """Base class for all domain errors raised by this package."""


class NotUnipotent(ParakamError):
    pass


class NotUnimodular(ParakamError):
    pass


class NonCommuting(ParakamError):
    pass


class NotInCommutationSpace(ParakamError):
    pass


class ZeroMode(ParakamError):
    pass


class NotStep2(ParakamError):
    pass


class NotStep2Orbit(ParakamError):
    pass


class DegenerateResonance(ParakamError):
    def __init__(self, message: str, witness=None, pair=None):
        super().__init__(message)
        self.witness = witness
        self.pair = pair


class BothDivisorsSmall(ParakamError):
    pass


class AliasRisk(ParakamError):
    pass


class ConditioningLoss(ParakamError):
    pass


class NoContraction(ParakamError):
    pass


class BasisFailure(ParakamError):
    pass


class NotLowest(ParakamError):
    pass


class NotC3(ParakamError):
    pass


class DivergenceDetected(ParakamError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class SmallnessViolated(ParakamError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
