"""Exception hierarchy shared by all modules."""


class MaxinvError(Exception):
    """Base class for every error raised by this package."""


class EmptyPolytope(MaxinvError):
    pass


class UnboundedPolytope(MaxinvError):
    pass


class DegeneratePolytope(MaxinvError):
    pass


class NotCset(MaxinvError):
    pass


class OriginNotInterior(MaxinvError):
    pass


class EliminationBlowup(MaxinvError):
    pass


class DimensionMismatch(MaxinvError, ValueError):
    pass


class NotConverged(MaxinvError):
    """An iteration hit its cap. ``last`` holds the final iterate, if any."""

    def __init__(self, message, last=None, log=None):
        super().__init__(message)
        self.last = last
        self.log = log


class EmptyResult(MaxinvError):
    pass


class UnstableClosedLoop(MaxinvError):
    pass


class UnstableMatrix(MaxinvError):
    pass


class IndefiniteIterate(MaxinvError):
    pass


class NumericalFailure(MaxinvError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class MaxIterations(NumericalFailure):
    pass


class NotContractive(MaxinvError):
    """The vertex-control LP is infeasible, so the set is not lambda-contractive."""


class SingularVertexMatrix(MaxinvError):
    pass


class OutsideFan(MaxinvError):
    pass


class InfeasibleTerminalCost(MaxinvError):
    pass


class InfeasibleState(MaxinvError):
    pass


class ConstraintsActive(MaxinvError):
    pass


class ProblemFileError(MaxinvError, ValueError):
    pass
