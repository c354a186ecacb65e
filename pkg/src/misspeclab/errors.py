"""Semantic exception hierarchy shared by all modules."""


class MisspecLabError(Exception):
    """Base error for this package."""


class NonFinite(MisspecLabError):
    """An integrand or moment returned NaN or an unexpected infinity."""


class ToleranceNotMet(MisspecLabError):
    """Quadrature error estimate exceeded the requested tolerance."""


class DomainError(MisspecLabError, ValueError):
    """A parameter lies outside its documented domain."""


class WeightError(DomainError):
    """Mixture or prior weights are invalid (negative, or do not sum to 1)."""


class MeasureMismatch(MisspecLabError):
    """Two densities do not live on compatible base measures."""


class AllInfinite(MisspecLabError):
    """Every family member has infinite KL divergence from the truth."""


class AllZeroLikelihood(MisspecLabError):
    """An observation has zero likelihood under every family member."""


class BaselineZeroLikelihood(AllZeroLikelihood):
    """An observation has zero likelihood under the baseline member f*."""


class MetricError(MisspecLabError):
    """A metric callback returned NaN or a negative distance."""


class GridTooCoarse(MisspecLabError):
    """Grid refinement exhausted its budget without closing the gap."""


class CoverageGap(MisspecLabError):
    """A sieve leaves some family member in neither V_n nor W_n."""


class MomentError(MisspecLabError):
    """A required moment (e.g. an exponential moment) is numerically divergent."""


class TruncationError(MisspecLabError):
    """A series truncation cannot reach its certified tail bound."""


class ConfigError(MisspecLabError, ValueError):
    """A run configuration is malformed or incomplete."""


class PostconditionError(MisspecLabError):
    """A documented postcondition failed to hold numerically."""
