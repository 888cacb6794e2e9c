"""Exception hierarchy shared across the package."""


class WflowError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(WflowError):
    """Invalid experiment configuration (CLI exit code 2)."""


class DimensionMismatch(WflowError):
    """Operands live in incompatible ambient dimensions."""


class SizeCapExceeded(WflowError):
    """Transport problem larger than the exact-solver cap."""


class NotConverged(WflowError):
    """Iterative solver exhausted its budget.

    Carries the last marginal residual in ``residual``.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularCovariance(WflowError):
    """An operation required a strictly positive-definite covariance."""


class NonAffineOnGaussian(WflowError):
    """Only affine maps keep the Gaussian family closed under pushforward."""


class EvalUnsupported(WflowError):
    """Functional variant cannot be evaluated on this measure family."""


class GradientUnavailable(WflowError):
    """Potential has no gradient callable."""


class ProxUnavailable(WflowError):
    """Potential has no proximity operator."""


class NoClosedFormMinimizer(WflowError):
    """No minimizer oracle is known for this functional."""


class NoExactSolver(WflowError):
    """No exact proximal step is available for this functional/family pair."""


class InnerSolverStalled(WflowError):
    """Inner descent could not certify the requested energy gap."""


class StepTooLarge(WflowError):
    """Forward stepsize violates tau < 1/L."""


class OracleUnavailable(WflowError):
    """Certificate requires a minimizer oracle that does not exist."""


class NegativeGap(WflowError):
    """An objective gap came out negative beyond tolerance; evaluation bug."""
