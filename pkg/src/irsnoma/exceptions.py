"""Typed failures raised by the solvers and closed-form routines."""


class IrsNomaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(IrsNomaError, ValueError):
    pass


class ZeroChannel(IrsNomaError, ValueError):
    pass


class CollinearChannels(IrsNomaError, ValueError):
    pass


class QdViolation(IrsNomaError, ValueError):
    """Quasi-degradation does not hold for the supplied channels."""


class DegenerateTrace(IrsNomaError, ValueError):
    pass


class OrthDegenerate(IrsNomaError, ValueError):
    """Composite channels are collinear so the zero-forcing ratio is undefined."""


class Infeasible(IrsNomaError):
    """A semidefinite subproblem has no feasible point."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoFeasibleCandidate(IrsNomaError):
    """Gaussian randomization produced no acceptable rank-one point."""


class SolverFailure(IrsNomaError):
    """The SDP solver stopped without a certified optimum."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class MaxOuterIter(IrsNomaError):
    pass


class ConfigError(IrsNomaError, ValueError):
    pass
