"""Exception and warning types raised by fraclab."""


class FraclabError(Exception):
    """Base class for all fraclab errors."""


class GridError(FraclabError, ValueError):
    """Unusable discretization or domain partition."""


class CoefficientError(FraclabError, ValueError):
    """Coefficient field violates symmetry or ellipticity."""


class AssemblyError(FraclabError):
    """Assembled operator fails its structural invariants."""


class NearSingular(FraclabError):
    """Interior system is numerically singular (zero is a Dirichlet eigenvalue)."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class QuadratureError(FraclabError, ValueError):
    """Quadrature range leaves too much of the integral unaccounted for."""


class InsufficientResolution(FraclabError):
    """A radial shell or ball is resolved by too few mesh cells."""


class ReflectionError(FraclabError):
    """Even reflection requested where the Neumann trace does not vanish."""


class ConfigError(FraclabError, ValueError):
    """Experiment configuration failed validation."""


class NonDecreasingMisfit(RuntimeWarning):
    """Backtracking line search failed to reduce the misfit."""


class QuadratureTailWarning(RuntimeWarning):
    """Truncated integration range may miss a noticeable tail contribution."""


class IllConditionedWarning(RuntimeWarning):
    """Normal equations are ill conditioned for the chosen regularization."""
