"""Exception hierarchy shared by every module of the package."""


class CausalOTError(Exception):
    """Base class for all errors raised by causalot."""


class EmptySupport(CausalOTError):
    pass


class UnnormalizedWeights(CausalOTError):
    pass


class RaggedPaths(CausalOTError):
    pass


class StageOutOfRange(CausalOTError):
    pass


class WrongStageCount(CausalOTError):
    pass


class NotAbsolutelyContinuous(CausalOTError):
    pass


class MarginalMismatch(CausalOTError):
    pass


class NotCausal(CausalOTError):
    pass


class NotMarkov(CausalOTError):
    pass


class NotProduct(CausalOTError):
    pass


class NotSemiseparable(CausalOTError):
    pass


class StageLimitExceeded(CausalOTError):
    pass


class NonConvergence(CausalOTError):
    pass


class WrongMode(CausalOTError):
    pass


class ParameterOutOfRange(CausalOTError):
    pass


class UnboundedBelow(CausalOTError):
    pass


class NumericalBreakdown(CausalOTError):
    """Pivot elements stayed below the breakdown threshold even under Bland's rule."""


class SolverFailure(CausalOTError):
    """An LP that must be feasible and bounded did not return Optimal."""


class ParseError(CausalOTError):
    """Malformed input document; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
