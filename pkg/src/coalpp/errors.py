"""Exception hierarchy shared by all coalpp modules."""


class CoalppError(Exception):
    """Base class for all library errors."""


class DomainError(CoalppError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class UnsupportedParameterizationError(DomainError):
    """The requested reparameterization does not exist (e.g. critical BD)."""


class UnsupportedConditioningError(DomainError):
    """The requested conditioning regime is invalid for this model."""


class MissingConditioningError(DomainError):
    """A conditioning value (e.g. the observed population) was not supplied."""


class NoPartnerError(DomainError):
    """No symmetric Poisson-sampled partner process exists."""


class NumericalError(CoalppError, RuntimeError):
    """A numerical routine failed to meet its requested accuracy."""


class IntegrationError(NumericalError):
    """Adaptive quadrature did not converge within the subdivision budget.

    Carries the best available estimate and an error bound so callers can
    decide whether the partial result is still usable.
    """

    def __init__(self, message, estimate, error_bound):
        super().__init__(f"{message} (estimate={estimate!r}, error_bound={error_bound!r})")
        self.estimate = estimate
        self.error_bound = error_bound


class InverseSamplingError(NumericalError):
    """Inverse-cdf sampling failed to bracket or converge."""


class DegeneratePoleError(NumericalError):
    """Partial-fraction poles coincide within tolerance.

    The closed form is singular here; perturb the coalescent times or use the
    quadrature mixing route (``sampling.ksample_mix``), which has no pole.
    """


class PopulationCapError(CoalppError, RuntimeError):
    """A forward simulation exceeded its population cap and was truncated."""

    def __init__(self, message, population, cap):
        super().__init__(message)
        self.population = population
        self.cap = cap


class NewickParseError(CoalppError, ValueError):
    """Malformed or non-ultrametric Newick input."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class VerificationError(CoalppError):
    """An acceptance-criterion check failed."""
