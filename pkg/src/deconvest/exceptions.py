"""Exception types shared across the package."""


class DomainError(ValueError):
    """Parameter value outside the region where a formula is defined."""


class QuadratureError(RuntimeError):
    """Numerical Fourier inversion did not meet its tolerance."""


class IllConditionedError(ArithmeticError):
    """A matrix needed for the sandwich covariance is too ill-conditioned."""


class EstimationError(RuntimeError):
    """An estimator could not produce a usable estimate."""
