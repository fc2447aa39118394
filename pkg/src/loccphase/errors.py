"""Exception types shared across the package."""


class LoccPhaseError(Exception):
    """Base class for all package errors."""


class InvalidMode(LoccPhaseError):
    pass


class BosonCapExceeded(LoccPhaseError):
    pass


class MixedSpeciesTransform(LoccPhaseError):
    pass


class NonSquareMatrix(LoccPhaseError):
    pass


class RegistryMismatch(LoccPhaseError):
    pass


class EmptyPostselection(LoccPhaseError):
    pass


class SingularityOnPath(LoccPhaseError):
    pass


class QuadratureNonConvergence(LoccPhaseError):
    pass


class OpenChain(LoccPhaseError):
    pass


class InconsistentGradient(LoccPhaseError):
    pass


class ForbiddenMeasurement(LoccPhaseError):
    def __init__(self, rule: str, message: str = ""):
        self.rule = rule
        super().__init__(message or f"measurement forbidden by {rule} superselection rule")


class SuperselectionViolation(LoccPhaseError):
    pass


class SectorMismatch(LoccPhaseError):
    pass


class CountMismatch(LoccPhaseError):
    pass


class MissingPath(LoccPhaseError):
    pass


class SupportMisestimate(LoccPhaseError):
    pass


class Unsolvable(LoccPhaseError):
    pass


class DegenerateLikelihood(LoccPhaseError):
    pass


class ScenarioError(LoccPhaseError):
    """Validation failure in a scenario description."""


class ParseError(LoccPhaseError):
    def __init__(self, line_no: int, message: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")
