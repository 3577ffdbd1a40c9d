"""Exception hierarchy shared by the filter, bandwidth and diagnostics code."""


class FilterError(RuntimeError):
    """Base class for numerical failures inside the filter recursion.

    ``k`` is the time index at which the failure happened, when known.
    For batched inputs ``mask`` marks the offending batch elements.
    """

    def __init__(self, message, k=None, mask=None):
        self.detail = message
        self.k = k
        self.mask = mask
        if k is not None:
            message = f"{message} (k={k})"
        super().__init__(message)

    def at(self, k):
        """Copy of this error tagged with time index ``k``."""
        return type(self)(self.detail, k=k, mask=self.mask)


class RiskTooLarge(FilterError):
    """``P^-1 - 2*mu1*I`` is not positive definite; mu1 must be reduced."""


class FactorizationFailed(FilterError):
    """A covariance handed to the Cholesky factorization is not positive definite."""


class PiSingular(FilterError):
    """A kernel weight underflowed; sigma is too small or an error too large."""


class InnovationSingular(FilterError):
    """The weighted innovation covariance could not be factorized."""


class MaxIterations(FilterError):
    """The fixed-point iteration hit ``t_max`` without meeting the tolerance."""


class AllCandidatesFailed(FilterError):
    """Every bandwidth in the search grid failed its fixed-point iteration."""


class ZeroInnovation(ValueError):
    """A heuristic bandwidth rule produced sigma = 0."""


class ObservabilityDegenerate(ArithmeticError):
    """The observability Grammian is singular."""


class GramSingular(ArithmeticError):
    """The kernel-weighted Gram matrix has a non-positive minimum eigenvalue."""
