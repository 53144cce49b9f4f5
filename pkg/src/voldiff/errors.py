"""Exception hierarchy shared by all voldiff modules."""


class VolDiffError(Exception):
    """Base class for every error raised by voldiff."""


class ModelError(VolDiffError, ValueError):
    pass


class EllipticityViolation(ModelError):
    """The squared volatility dips below the ellipticity floor ``d``."""


class NormViolation(ModelError):
    """A sup-norm or H1-norm bound of the coefficient class is exceeded."""


class QuadratureFailure(VolDiffError, ArithmeticError):
    """An integrand produced non-finite values."""


class InvalidStep(VolDiffError, ValueError):
    pass


class StepMismatch(VolDiffError, ValueError):
    """The observation step is not an integer multiple of the sub-step."""


class ConditioningExhausted(VolDiffError, RuntimeError):
    """Rejection sampling of the occupation event ran out of tries."""

    def __init__(self, message, replicate=None):
        super().__init__(message)
        self.replicate = replicate


class TooFewObservations(VolDiffError, ValueError):
    pass


class NotPositiveDefinite(VolDiffError, ArithmeticError):
    """The mass matrix failed the Cholesky pivot check."""


class NoConvergence(VolDiffError, ArithmeticError):
    pass


class DegenerateSpectrum(VolDiffError, ArithmeticError):
    """The first nontrivial eigenvalue is numerically zero."""


class AllMasked(VolDiffError, ValueError):
    """Every quadrature node of an error norm falls in a masked region."""


class DegenerateDesign(VolDiffError, ValueError):
    pass


class ConfigError(VolDiffError, ValueError):
    pass
