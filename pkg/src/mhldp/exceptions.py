"""Exception types raised across the package."""


class DomainError(ValueError):
    """A density, gradient or ratio is undefined at the requested point."""


class QuadratureError(RuntimeError):
    """Numerical integration did not reach the requested tolerance."""

    def __init__(self, message, error_estimate=float("nan")):
        super().__init__(message)
        self.error_estimate = error_estimate


class DivergentIntegralError(QuadratureError):
    """The integrand does not decay at the edge of the integration domain."""


class InfeasibleError(ValueError):
    """No coupling with the requested marginals is supported by the kernel."""


class SizeError(ValueError):
    """A dynamic-programming table would exceed the configured budget."""


class PreconditionError(ValueError):
    """An operation was called on inputs that violate its precondition."""


class CoverageError(ValueError):
    """A grid leaves too much target mass outside its box."""
