"""Divergence and affinity functionals between densities.

All expectations are taken under the truth f0: ``kl`` is E0 log(f0/f),
``kl_excess`` subtracts the divergence to the baseline f*, and
``alpha_affinity`` is E0 (f/f*)**alpha with the endpoint conventions
h_0 = 1 and h_1 = E0 (f/f*).  Ratio integrands are evaluated as
exp(log f - log f*) so atoms and steep densities cannot overflow.

An infinite KL (f vanishing on a set of positive f0-mass) is a tagged
value on the returned estimate, not an exception, so that scenario
reports can carry it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, NonFinite
from .measures import BaseMeasure, Density, Support, WeightedMeasure, integrate

__all__ = [
    "DivergenceEstimate",
    "AffinityCurve",
    "kl",
    "kl_excess",
    "alpha_affinity",
    "inf_alpha_affinity",
    "affinity_curve",
    "weighted_l1",
    "l1",
    "l1_metric",
    "weighted_l1_metric",
    "sup_metric",
    "mu0_measure",
]

_ZERO_MASS_TOL = 1e-12


@dataclass(frozen=True)
class DivergenceEstimate:
    """A divergence value with its quadrature error and provenance."""

    value: float
    err: float
    method: str = "quadrature"
    witness: Support | None = None

    def __post_init__(self):
        if self.err < 0:
            raise DomainError("err must be nonnegative")

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


@dataclass(frozen=True)
class AffinityCurve:
    """The affinity h_alpha sampled on an ordered alpha grid, plus K*."""

    alphas: tuple[float, ...]
    values: tuple[float, ...]
    kstar: float


def _shared_measure(f0: Density, f: Density) -> BaseMeasure:
    return f0.measure.merge(f.measure)


def _all_breakpoints(*densities: Density) -> tuple[float, ...]:
    return tuple(sorted({b for d in densities for b in d.breakpoints if math.isfinite(b)}))


def _restrict(measure: BaseMeasure, support: Support) -> BaseMeasure:
    """Base measure restricted to a support descriptor."""
    pieces = []
    for a, b in measure.pieces:
        for sa, sb in support.intervals:
            lo, hi = max(a, sa), min(b, sb)
            if lo < hi:
                pieces.append((lo, hi))
    atom_set = set(support.atoms)
    atoms = tuple((loc, m) for loc, m in measure.atoms if loc in atom_set)
    return BaseMeasure(pieces=tuple(pieces), atoms=atoms)


def _missing_mass(f0: Density, f: Density, measure: BaseMeasure) -> tuple[float, Support]:
    """f0-mass of the region where f vanishes but f0 does not."""
    gap = f0.support.minus(f.support)
    if gap.is_empty():
        return 0.0, gap
    restricted = _restrict(measure, gap)
    if not restricted.pieces and not restricted.atoms:
        return 0.0, gap
    mass, _ = integrate(
        lambda y: float(np.exp(f0.log_pdf(y))),
        restricted,
        tol=1e-6,
        breakpoints=_all_breakpoints(f0, f),
    )
    return mass, gap


def kl(f0: Density, f: Density, tol: float = 1e-9) -> DivergenceEstimate:
    """Kullback-Leibler divergence E0 log(f0/f).

    Returns +inf (with the offending support region as witness) when f
    vanishes on a set of positive f0-mass.
    """
    measure = _shared_measure(f0, f)
    mass, gap = _missing_mass(f0, f, measure)
    if mass > _ZERO_MASS_TOL:
        return DivergenceEstimate(value=math.inf, err=0.0, witness=gap)

    def integrand(y):
        lf0 = float(f0.log_pdf(y))
        if lf0 == -math.inf:
            return 0.0
        lf = float(f.log_pdf(y))
        if lf == -math.inf:
            # measure-zero mismatch slipped through the support check
            raise NonFinite(f"f vanishes at y={y} where f0 does not")
        return math.exp(lf0) * (lf0 - lf)

    value, err = integrate(integrand, measure, tol=tol, breakpoints=_all_breakpoints(f0, f))
    return DivergenceEstimate(value=value, err=err)


def kl_excess(f0: Density, f: Density, fstar: Density, tol: float = 1e-9) -> DivergenceEstimate:
    """KL excess over the baseline: E0 log(f0/f) - E0 log(f0/f*)."""
    base = kl(f0, fstar, tol=tol)
    if base.is_infinite:
        raise NonFinite("baseline KL divergence is infinite")
    top = kl(f0, f, tol=tol)
    if top.is_infinite:
        return top
    return DivergenceEstimate(value=top.value - base.value, err=top.err + base.err)


def alpha_affinity(
    f0: Density, fstar: Density, f: Density, alpha: float, tol: float = 1e-9
) -> DivergenceEstimate:
    """Affinity E0 (f/f*)**alpha with exact endpoints h_0 = 1, h_1 = E0 f/f*."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0,1], got {alpha}")
    if alpha == 0.0:
        return DivergenceEstimate(value=1.0, err=0.0, method="closed_form")
    measure = _shared_measure(f0, fstar).merge(f.measure)

    def integrand(y):
        lf0 = float(f0.log_pdf(y))
        if lf0 == -math.inf:
            return 0.0
        lf = float(f.log_pdf(y))
        if lf == -math.inf:
            return 0.0
        lfs = float(fstar.log_pdf(y))
        return math.exp(lf0 + alpha * (lf - lfs))

    value, err = integrate(
        integrand, measure, tol=tol, breakpoints=_all_breakpoints(f0, fstar, f)
    )
    return DivergenceEstimate(value=value, err=err)


def inf_alpha_affinity(
    f0: Density, fstar: Density, f: Density, tol: float = 1e-9
) -> tuple[float, float]:
    """Minimize h_alpha over alpha in [0,1].

    Ternary search on the convex affinity curve down to width 1e-6, then a
    parabolic refinement; falls back to a dense grid if the curve fails a
    convexity spot check.  Ties resolve to the smallest alpha.
    """
    cache: dict[float, float] = {}

    def h(a: float) -> float:
        a = min(max(a, 0.0), 1.0)
        if a not in cache:
            cache[a] = alpha_affinity(f0, fstar, f, a, tol=tol).value
        return cache[a]

    # convexity spot check on a coarse grid
    coarse = [0.0, 0.25, 0.5, 0.75, 1.0]
    vals = [h(a) for a in coarse]
    convex_ok = all(
        vals[i] <= 0.5 * (vals[i - 1] + vals[i + 1]) + 1e-9 for i in (1, 2, 3)
    )
    if not convex_ok:
        grid = np.linspace(0.0, 1.0, 10_001)
        hg = [h(float(a)) for a in grid]
        i = int(np.argmin(hg))
        return float(grid[i]), float(hg[i])

    lo, hi = 0.0, 1.0
    while hi - lo > 1e-6:
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if h(m1) <= h(m2):
            hi = m2
        else:
            lo = m1
    mid = 0.5 * (lo + hi)
    # parabolic refinement through the bracketing triple
    a, b, c = lo, mid, hi
    fa, fb, fc = h(a), h(b), h(c)
    denom = (b - a) * (fb - fc) - (b - c) * (fb - fa)
    if abs(denom) > 1e-300:
        b_ref = b - 0.5 * ((b - a) ** 2 * (fb - fc) - (b - c) ** 2 * (fb - fa)) / denom
        if 0.0 <= b_ref <= 1.0:
            h(b_ref)
    best_alpha = min(cache, key=lambda a: (cache[a], a))
    best = cache[best_alpha]
    # tie rule: smallest alpha attaining the minimum within tol
    for a in sorted(cache):
        if cache[a] <= best + tol:
            return float(a), float(cache[a])
    return float(best_alpha), float(best)


def affinity_curve(
    f0: Density, fstar: Density, f: Density, alphas, tol: float = 1e-9
) -> AffinityCurve:
    """Sample h_alpha on a grid and attach the KL excess."""
    alphas = tuple(float(a) for a in alphas)
    values = tuple(alpha_affinity(f0, fstar, f, a, tol=tol).value for a in alphas)
    ks = kl_excess(f0, f, fstar, tol=tol).value
    return AffinityCurve(alphas=alphas, values=values, kstar=ks)


def weighted_l1(
    f: Density, g: Density, f0: Density, fstar: Density, tol: float = 1e-9
) -> DivergenceEstimate:
    """Weighted L1 distance: integral of |f - g| d mu0, d mu0 = (f0/f*) d mu."""
    measure = _shared_measure(f, g).merge(f0.measure).merge(fstar.measure)

    def integrand(y):
        lf0 = float(f0.log_pdf(y))
        if lf0 == -math.inf:
            return 0.0
        w = math.exp(lf0 - float(fstar.log_pdf(y)))
        return abs(float(np.exp(f.log_pdf(y))) - float(np.exp(g.log_pdf(y)))) * w

    value, err = integrate(
        integrand, measure, tol=tol, breakpoints=_all_breakpoints(f, g, f0, fstar)
    )
    return DivergenceEstimate(value=value, err=err)


def l1(f: Density, g: Density, tol: float = 1e-9) -> DivergenceEstimate:
    """Plain L1 distance, atoms included."""
    measure = _shared_measure(f, g)

    def integrand(y):
        return abs(float(np.exp(f.log_pdf(y))) - float(np.exp(g.log_pdf(y))))

    value, err = integrate(integrand, measure, tol=tol, breakpoints=_all_breakpoints(f, g))
    return DivergenceEstimate(value=value, err=err)


def mu0_measure(f0: Density, fstar: Density, tol: float = 1e-6) -> WeightedMeasure:
    """The reweighted base measure d mu0 = (f0/f*) d mu, with its total mass
    verified finite (raises NonFinite otherwise)."""
    base = _shared_measure(f0, fstar)

    def weight(y):
        y = np.asarray(y, dtype=float)
        lf0 = f0.log_pdf(y)
        with np.errstate(over="ignore"):  # divergent ratios surface as NonFinite
            return np.where(np.isneginf(lf0), 0.0, np.exp(lf0 - fstar.log_pdf(y)))

    raw = WeightedMeasure(base=base, weight=lambda y: float(weight(y)))
    return raw.with_total(tol=tol, breakpoints=_all_breakpoints(f0, fstar))


# --- metric factories used by region queries and checkers -----------------


def l1_metric(tol: float = 1e-9) -> Callable[[Density, Density], float]:
    return lambda f, g: l1(f, g, tol=tol).value


def weighted_l1_metric(
    f0: Density, fstar: Density, tol: float = 1e-9
) -> Callable[[Density, Density], float]:
    return lambda f, g: weighted_l1(f, g, f0, fstar, tol=tol).value


def sup_metric(grid) -> Callable[[Density, Density], float]:
    """Sup distance between pdfs evaluated on a fixed grid."""
    pts = np.asarray(grid, dtype=float)

    def d(f: Density, g: Density) -> float:
        return float(np.max(np.abs(np.exp(f.log_pdf(pts)) - np.exp(g.log_pdf(pts)))))

    return d
