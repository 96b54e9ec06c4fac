"""Exception hierarchy for the rdcp toolkit.

Every error raised on a documented failure path derives from RdcpError so
callers (and the CLI) can map failures to exit codes without matching on
message strings.
"""


class RdcpError(Exception):
    """Base class for all rdcp-specific errors."""


class NegativeWeight(RdcpError):
    """A degree-constraint weight is negative."""


class SumNotOne(RdcpError):
    """Degree-constraint weights do not sum to 1 within tolerance."""


class DeltaTooSmall(RdcpError):
    """Maximum degree must be at least 2."""


class DegenerateRegular(RdcpError):
    """Operation undefined for the pure 2-regular law (p_2 = 1)."""


class NonFiniteResult(RdcpError):
    """Evaluation would overflow double precision."""


class ToleranceUnachievable(RdcpError):
    """Independent solution paths disagree beyond the requested tolerance."""


class OutOfRange(RdcpError):
    """Evaluation point lies outside the tabulated horizon."""


class HorizonTooSmall(RdcpError):
    """Operator parameter exceeds the available table horizon."""


class NoConvergence(RdcpError):
    """Iterative eigensolver failed to converge within its iteration cap."""


class BracketFailure(RdcpError):
    """Root bracketing hit the configured cap without sign change."""


class ThresholdNeverReached(RdcpError):
    """No simulated replicate produced a component above the threshold."""


class ConvergenceOrderViolation(RdcpError):
    """Finite-difference errors do not shrink at the expected first order."""


class SingularAtZero(RdcpError):
    """A quadrature node at t = 0 was passed where the integrand is 0/0."""


class UsageError(RdcpError):
    """Malformed command-line invocation."""
