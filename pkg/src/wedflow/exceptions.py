"""Exception hierarchy shared by all solvers."""


class WedflowError(Exception):
    """Base class for every error raised by the package."""


class InputError(WedflowError, ValueError):
    """Malformed input data (non-finite values, shape or grid mismatch)."""


class ParameterError(WedflowError, ValueError):
    """A scalar parameter violates its admissible range."""


class ConstraintError(WedflowError, ValueError):
    """Control parameters outside their box."""


class DomainError(WedflowError, ValueError):
    """State outside the domain of the subdifferential."""


class CapabilityError(WedflowError, TypeError):
    """Operation not offered by this energy (e.g. Hessian of a nonsmooth one)."""


class SolverError(WedflowError, RuntimeError):
    """An iterative solver failed to converge.

    The best iterate found so far is kept on ``best`` so callers can inspect
    or reuse it.
    """

    def __init__(self, message, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report


class OracleError(WedflowError, RuntimeError):
    """A closed-form certificate or reference quadrature failed."""


class ConfigError(WedflowError, ValueError):
    """Invalid run configuration."""
