"""Mixed-measure base layer: densities, integration, and sampling.

The base measure is a sum of Lebesgue measure on disjoint intervals and
counting atoms at isolated points.  Every density in the package is a density
with respect to such a measure, which lets step densities, heavy-tailed
continuous densities, and densities with point masses share one integral and
one posterior engine.

Conventions enforced throughout:
  * ``log_pdf`` returns exactly ``-inf`` off the support;
  * ``0 * log 0 = 0`` inside every integrand built here;
  * atoms contribute ``g(location) * mass`` to integrals, exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _sciint
from scipy import special as _scispec

from .errors import DomainError, MeasureMismatch, NonFinite, ToleranceNotMet, WeightError
from .streams import stream

__all__ = [
    "BaseMeasure",
    "Support",
    "Density",
    "WeightedMeasure",
    "SampleBatch",
    "integrate",
    "make_ald",
    "catalog",
    "example2_measure",
    "E2_LOWER_CDF",
]

_ATOM_SNAP = 1e-12  # atoms are matched by exact location up to this slack


def _merge_intervals(intervals: Sequence[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    ivs = sorted((float(a), float(b)) for a, b in intervals)
    out: list[tuple[float, float]] = []
    for a, b in ivs:
        if out and a <= out[-1][1] + _ATOM_SNAP:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return tuple(out)


@dataclass(frozen=True)
class BaseMeasure:
    """Lebesgue measure on disjoint ordered intervals plus counting atoms.

    ``atoms`` is a tuple of ``(location, mass)`` pairs; mass is 1 for plain
    counting atoms.  Atom locations must not fall in the interior of any
    Lebesgue piece, so a point is always unambiguously either an atom or a
    Lebesgue point.
    """

    pieces: tuple[tuple[float, float], ...] = ()
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        pieces = tuple((float(a), float(b)) for a, b in self.pieces)
        atoms = tuple((float(loc), float(m)) for loc, m in self.atoms)
        for a, b in pieces:
            if not a < b:
                raise DomainError(f"empty or inverted piece ({a}, {b})")
        for (a1, b1), (a2, b2) in zip(pieces, pieces[1:]):
            if b1 > a2:
                raise DomainError("pieces must be disjoint and ordered")
        locs = [loc for loc, _ in atoms]
        if len(set(locs)) != len(locs):
            raise DomainError("atom locations must be distinct")
        for loc, m in atoms:
            if m <= 0:
                raise DomainError("atom mass must be positive")
            for a, b in pieces:
                if a < loc < b:
                    raise DomainError(f"atom at {loc} lies inside Lebesgue piece ({a}, {b})")
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "atoms", tuple(sorted(atoms)))

    def merge(self, other: "BaseMeasure") -> "BaseMeasure":
        """Smallest common extension of two base measures.

        Raises MeasureMismatch when an atom of one measure sits inside a
        Lebesgue piece of the other, or the same location carries different
        masses.
        """
        pieces = _merge_intervals(self.pieces + other.pieces)
        by_loc: dict[float, float] = {}
        for loc, m in self.atoms + other.atoms:
            if loc in by_loc and abs(by_loc[loc] - m) > _ATOM_SNAP:
                raise MeasureMismatch(f"atom at {loc} carries conflicting masses")
            by_loc[loc] = m
        for loc in by_loc:
            for a, b in pieces:
                if a < loc < b:
                    raise MeasureMismatch(f"atom at {loc} inside merged piece ({a}, {b})")
        return BaseMeasure(pieces=pieces, atoms=tuple(sorted(by_loc.items())))

    def atom_locations(self) -> tuple[float, ...]:
        return tuple(loc for loc, _ in self.atoms)


@dataclass(frozen=True)
class Support:
    """Support descriptor: open/closed intervals plus a subset of atoms."""

    intervals: tuple[tuple[float, float], ...] = ()
    atoms: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "intervals", _merge_intervals(self.intervals))
        object.__setattr__(self, "atoms", tuple(sorted(float(a) for a in self.atoms)))

    def minus(self, other: "Support") -> "Support":
        """Set difference of supports (interval arithmetic, endpoint-blind)."""
        remaining = [tuple(iv) for iv in self.intervals]
        for oa, ob in other.intervals:
            nxt: list[tuple[float, float]] = []
            for a, b in remaining:
                if ob <= a or oa >= b:
                    nxt.append((a, b))
                    continue
                if a < oa:
                    nxt.append((a, oa))
                if ob < b:
                    nxt.append((ob, b))
            remaining = nxt
        atoms = tuple(a for a in self.atoms if a not in set(other.atoms))
        # drop numerically empty slivers
        intervals = tuple((a, b) for a, b in remaining if b - a > _ATOM_SNAP)
        return Support(intervals=intervals, atoms=atoms)

    def is_empty(self) -> bool:
        return not self.intervals and not self.atoms


@dataclass(frozen=True)
class SampleBatch:
    """A seeded batch of draws.

    ``tail_exponents`` (optional) is the per-draw value ``e`` with
    ``log(1 - sqrt(y)) = -e`` held exactly, for samplers whose law puts
    appreciable mass at distances from 1 far below float resolution.
    """

    values: np.ndarray
    seed: int
    n: int
    tail_exponents: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.tail_exponents is not None:
            t = np.asarray(self.tail_exponents, dtype=float)
            t.setflags(write=False)
            object.__setattr__(self, "tail_exponents", t)
        if len(v) != self.n:
            raise DomainError("SampleBatch length disagrees with n")


@dataclass(frozen=True)
class Density:
    """Evaluatable log-density plus inverse-CDF sampler over a BaseMeasure.

    ``log_pdf`` is vectorized (accepts scalars or arrays) and returns -inf
    exactly off the declared support.  ``breakpoints`` lists every point
    where the density or its integrands may be non-smooth; the quadrature
    forces subdivision there.
    """

    measure: BaseMeasure
    log_pdf: Callable[[np.ndarray], np.ndarray]
    support: Support
    label: str
    breakpoints: tuple[float, ...] = ()
    icdf: Callable[[np.ndarray], np.ndarray] | None = None
    tail_exponent: Callable[[np.ndarray], np.ndarray] | None = None
    family_params: tuple | None = None

    def pdf(self, y):
        return np.exp(self.log_pdf(y))

    def sample(self, n: int, seed: int, stream_id: int = 0) -> SampleBatch:
        """Draw n values via the inverse CDF from stream (seed, stream_id)."""
        if self.icdf is None:
            raise DomainError(f"density {self.label!r} has no sampler")
        u = stream(seed, stream_id).uniform(size=int(n))
        values = np.asarray(self.icdf(u), dtype=float)
        tails = None
        if self.tail_exponent is not None:
            tails = np.asarray(self.tail_exponent(u), dtype=float)
        return SampleBatch(values=values, seed=int(seed), n=int(n), tail_exponents=tails)


@dataclass(frozen=True)
class WeightedMeasure:
    """A base measure reweighted by a nonnegative Radon-Nikodym factor."""

    base: BaseMeasure
    weight: Callable[[np.ndarray], np.ndarray]
    total: float = field(default=math.nan)

    def with_total(self, tol: float = 1e-6, breakpoints: tuple[float, ...] = ()) -> "WeightedMeasure":
        value, _ = integrate(self.weight, self.base, tol=tol, breakpoints=breakpoints)
        if not math.isfinite(value):
            raise NonFinite("total weight of weighted measure is not finite")
        return WeightedMeasure(base=self.base, weight=self.weight, total=value)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

_QUAD_LIMIT = 200  # subdivisions per smooth segment


def integrate(
    g: Callable[[float], float],
    m: BaseMeasure,
    tol: float = 1e-9,
    breakpoints: Sequence[float] = (),
) -> tuple[float, float]:
    """Integrate g against the mixed measure m.

    Returns ``(value, err)`` with ``err`` the accumulated quadrature error
    estimate.  Lebesgue pieces are split at the supplied breakpoints and
    integrated adaptively; atoms contribute ``g(loc) * mass`` exactly.

    Raises NonFinite if g returns NaN/inf in a piece interior or at an atom,
    and ToleranceNotMet if the error estimate ends up above tol.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    pts = sorted(float(p) for p in breakpoints)

    segments: list[tuple[float, float]] = []
    for lo, hi in m.pieces:
        inner = [p for p in pts if lo < p < hi]
        edges = [lo, *inner, hi]
        segments.extend(zip(edges, edges[1:]))

    def checked(x: float) -> float:
        v = float(g(x))
        if math.isnan(v) or math.isinf(v):
            raise NonFinite(f"integrand non-finite at y={x}")
        return v

    n_parts = max(1, len(segments))
    eps_each = tol / (2.0 * n_parts)
    value = 0.0
    err = 0.0
    for a, b in segments:
        v, e = _sciint.quad(
            checked, a, b, epsabs=eps_each, epsrel=1e-11, limit=_QUAD_LIMIT
        )
        value += v
        err += e
    for loc, mass in m.atoms:
        gv = float(g(loc))
        if math.isnan(gv) or math.isinf(gv):
            raise NonFinite(f"integrand non-finite at atom y={loc}")
        value += gv * mass
    if err > tol:
        raise ToleranceNotMet(f"quadrature error {err:.3e} exceeds tol {tol:.3e}")
    return value, err


# ---------------------------------------------------------------------------
# Catalog of scenario densities
# ---------------------------------------------------------------------------

#: CDF of the heavy-tailed truth of the atom-tail counterexample at y = 1/2.
E2_LOWER_CDF = 1.0 - (-math.log(1.0 - 2.0**-0.5)) ** -0.5


def make_ald(tau: float) -> Density:
    """Asymmetric Laplace density tau*(1-tau)*exp(-z*(tau - [z<=0])).

    Its tau-th quantile is 0 and log_pdf(0) = log(tau*(1-tau)).
    """
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0,1), got {tau}")
    tau = float(tau)
    logc = math.log(tau * (1.0 - tau))

    def log_pdf(z):
        z = np.asarray(z, dtype=float)
        return logc - z * (tau - (z <= 0.0))

    def icdf(u):
        u = np.asarray(u, dtype=float)
        neg = np.log(np.maximum(u, 1e-320) / tau) / (1.0 - tau)
        pos = -np.log(np.maximum(1.0 - u, 1e-320) / (1.0 - tau)) / tau
        return np.where(u <= tau, neg, pos)

    measure = BaseMeasure(pieces=((-math.inf, math.inf),))
    return Density(
        measure=measure,
        log_pdf=log_pdf,
        support=Support(intervals=((-math.inf, math.inf),)),
        label=f"ald(tau={tau:g})",
        breakpoints=(0.0,),
        icdf=icdf,
        family_params=("ald", tau),
    )


def _unif(lo: float, hi: float, measure: BaseMeasure | None = None) -> Density:
    if not lo < hi:
        raise DomainError(f"uniform needs lo < hi, got ({lo}, {hi})")
    lo, hi = float(lo), float(hi)
    logd = -math.log(hi - lo)

    def log_pdf(y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= lo) & (y <= hi), logd, -math.inf)

    def icdf(u):
        return lo + (hi - lo) * np.asarray(u, dtype=float)

    return Density(
        measure=measure or BaseMeasure(pieces=((lo, hi),)),
        log_pdf=log_pdf,
        support=Support(intervals=((lo, hi),)),
        label=f"unif({lo:g},{hi:g})",
        breakpoints=(lo, hi),
        icdf=icdf,
        family_params=("unif", lo, hi),
    )


def _normal(mu: float, sigma: float) -> Density:
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    mu, sigma = float(mu), float(sigma)
    logc = -0.5 * math.log(2.0 * math.pi) - math.log(sigma)

    def log_pdf(y):
        y = np.asarray(y, dtype=float)
        z = (y - mu) / sigma
        return logc - 0.5 * z * z

    def icdf(u):
        return mu + sigma * _scispec.ndtri(np.asarray(u, dtype=float))

    return Density(
        measure=BaseMeasure(pieces=((-math.inf, math.inf),)),
        log_pdf=log_pdf,
        support=Support(intervals=((-math.inf, math.inf),)),
        label=f"normal({mu:g},{sigma:g})",
        breakpoints=(mu,),
        icdf=icdf,
        family_params=("normal", mu, sigma),
    )


def _mixture(components: Sequence[Density], weights: Sequence[float]) -> Density:
    if len(components) != len(weights) or not components:
        raise DomainError("mixture needs matching nonempty components and weights")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-12:
        raise WeightError(f"mixture weights must be >=0 and sum to 1, got sum {w.sum()!r}")
    measure = components[0].measure
    for comp in components[1:]:
        measure = measure.merge(comp.measure)
    logw = np.where(w > 0, np.log(np.maximum(w, 1e-320)), -math.inf)

    comps = tuple(components)

    def log_pdf(y):
        y = np.asarray(y, dtype=float)
        stack = np.stack([c.log_pdf(y) + lw for c, lw in zip(comps, logw)])
        return _scispec.logsumexp(stack, axis=0)

    def icdf(u):
        # one uniform picks the component (via cumulative weights), the
        # fractional remainder within the slot drives the component's icdf;
        # keeps the draw a pure function of u.
        u = np.asarray(u, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(w)])
        cum[-1] = 1.0
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(comps) - 1)
        inner = (u - cum[idx]) / np.maximum(cum[idx + 1] - cum[idx], 1e-320)
        inner = np.clip(inner, 1e-15, 1.0 - 1e-15)
        out = np.empty_like(u)
        for j, c in enumerate(comps):
            mask = idx == j
            if np.any(mask):
                if c.icdf is None:
                    raise DomainError(f"mixture component {c.label!r} has no sampler")
                out[mask] = c.icdf(inner[mask])
        return out

    intervals = tuple(iv for c in comps for iv in c.support.intervals)
    atoms = tuple(a for c in comps for a in c.support.atoms)
    bps = tuple(sorted({b for c in comps for b in c.breakpoints}))
    label = "mixture(" + ",".join(c.label for c in comps) + ")"
    return Density(
        measure=measure,
        log_pdf=log_pdf,
        support=Support(intervals=intervals, atoms=atoms),
        label=label,
        breakpoints=bps,
        icdf=icdf,
    )


def _example1_measure() -> BaseMeasure:
    return BaseMeasure(pieces=((0.0, 2.0),))


def _example1_fk(b: float) -> Density:
    """Two-step density: b on (0,1), 2(1-b) on (1, 3/2)."""
    if not 0.0 < b < 0.5:
        raise DomainError(f"b must lie in (0, 1/2), got {b}")
    b = float(b)
    hi = 2.0 * (1.0 - b)

    def log_pdf(y):
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, -math.inf)
        out = np.where((y > 0.0) & (y <= 1.0), math.log(b), out)
        out = np.where((y > 1.0) & (y < 1.5), math.log(hi), out)
        return out

    def icdf(u):
        u = np.asarray(u, dtype=float)
        return np.where(u <= b, u / b, 1.0 + (u - b) / hi)

    return Density(
        measure=_example1_measure(),
        log_pdf=log_pdf,
        support=Support(intervals=((0.0, 1.0), (1.0, 1.5))),
        label=f"example1_fk(b={b:g})",
        breakpoints=(0.0, 1.0, 1.5),
        icdf=icdf,
        family_params=("example1_fk", b),
    )


def example2_measure(k_max: int = 40) -> BaseMeasure:
    """Lebesgue measure on [0,2] plus unit atoms at integers 3..k_max."""
    if k_max < 3:
        raise DomainError("k_max must be at least 3")
    return BaseMeasure(
        pieces=((0.0, 2.0),),
        atoms=tuple((float(k), 1.0) for k in range(3, int(k_max) + 1)),
    )


def _example2_fk(k: int, k_max: int = 40) -> Density:
    """Step density 1/2 - 1/k on [0,1] plus an atom of mass 1/2 + 1/k at y=k."""
    if k < 3:
        raise DomainError(f"k must be >= 3, got {k}")
    k = int(k)
    k_max = max(int(k_max), k)
    flat = 0.5 - 1.0 / k
    atom = 0.5 + 1.0 / k

    def log_pdf(y):
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, -math.inf)
        out = np.where((y >= 0.0) & (y <= 1.0), math.log(flat), out)
        out = np.where(y == float(k), math.log(atom), out)
        return out

    def icdf(u):
        u = np.asarray(u, dtype=float)
        return np.where(u <= flat, u / flat, float(k))

    return Density(
        measure=example2_measure(k_max),
        log_pdf=log_pdf,
        support=Support(intervals=((0.0, 1.0),), atoms=(float(k),)),
        label=f"example2_fk(k={k})",
        breakpoints=(0.0, 1.0),
        icdf=icdf,
        family_params=("example2_fk", float(k)),
    )


def _example2_ga(a: float, k_max: int = 40) -> Density:
    """Step density 1/2 on [0,a] and 1 - a/2 on [1,2]; a=1 is unif(0,2)."""
    if not 0.0 < a <= 1.0:
        raise DomainError(f"a must lie in (0, 1], got {a}")
    a = float(a)
    right = 1.0 - a / 2.0

    def log_pdf(y):
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, -math.inf)
        out = np.where((y >= 0.0) & (y <= a), math.log(0.5), out)
        out = np.where((y >= 1.0) & (y <= 2.0), math.log(right), out)
        return out

    def icdf(u):
        u = np.asarray(u, dtype=float)
        lower_mass = a / 2.0
        return np.where(u <= lower_mass, 2.0 * u, 1.0 + (u - lower_mass) / right)

    intervals = ((0.0, a), (1.0, 2.0)) if a < 1.0 else ((0.0, 2.0),)
    return Density(
        measure=example2_measure(k_max),
        log_pdf=log_pdf,
        support=Support(intervals=intervals),
        label=f"example2_ga(a={a:g})",
        breakpoints=(0.0, a, 1.0, 2.0),
        icdf=icdf,
        family_params=("example2_ga", a),
    )


def _example2_f0(k_max: int = 40) -> Density:
    """Heavy-upper-tail truth on (0,1): flat up to 1/2, explosive near 1.

    CDF: 2*y*c on (0, 1/2] and 1 - (-log(1 - sqrt(y)))**(-1/2) on (1/2, 1),
    with c = E2_LOWER_CDF.  The inverse CDF on the upper branch is
    y = (1 - exp(-(1-u)**-2))**2; the sampler keeps the exponent
    e = (1-u)**-2 so that log(1 - sqrt(y)) = -e stays exact far beyond
    float resolution of y itself.
    """
    c = E2_LOWER_CDF

    def log_pdf(y):
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, -math.inf)
        out = np.where((y > 0.0) & (y <= 0.5), math.log(2.0 * c), out)
        upper = (y > 0.5) & (y < 1.0)
        if np.any(upper):
            ysafe = np.where(upper, y, 0.75)
            s = np.sqrt(ysafe)
            # 1 - sqrt(y) via (1-y)/(1+sqrt(y)): no cancellation near y = 1
            t = (1.0 - ysafe) / (1.0 + s)
            with np.errstate(divide="ignore", invalid="ignore"):
                L = -np.log(t)
                val = -1.5 * np.log(L) - math.log(4.0) - np.log(s) - np.log(t)
            out = np.where(upper, val, out)
        return out

    def icdf(u):
        u = np.asarray(u, dtype=float)
        lower = u / (2.0 * c)
        with np.errstate(divide="ignore", over="ignore"):
            e = (1.0 - u) ** -2.0
            upper = (1.0 - np.exp(-e)) ** 2
        # extreme-tail draws would round to exactly 1.0, off the open support;
        # snap them to the largest representable value below 1 (the exact tail
        # location lives in the stored exponent, not in y)
        upper = np.minimum(upper, np.nextafter(1.0, 0.0))
        return np.where(u <= c, lower, upper)

    def tail_exponent(u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            e_upper = (1.0 - u) ** -2.0
        y_lower = np.clip(u / (2.0 * c), 0.0, 0.5)
        e_lower = -np.log1p(-np.sqrt(y_lower))
        return np.where(u <= c, e_lower, e_upper)

    return Density(
        measure=example2_measure(k_max),
        log_pdf=log_pdf,
        support=Support(intervals=((0.0, 1.0),)),
        label="example2_f0",
        breakpoints=(0.0, 0.5, 1.0),
        icdf=icdf,
        tail_exponent=tail_exponent,
        family_params=("example2_f0",),
    )


def catalog(name: str, **params) -> Density:
    """Build a named scenario density.

    Known names: example1_fk(b), example1_fstar, example2_fk(k[, k_max]),
    example2_ga(a[, k_max]), example2_f0([k_max]), unif(lo, hi),
    normal(mu, sigma), mixture(components, weights), ald(tau).
    """
    builders: dict[str, Callable[..., Density]] = {
        "example1_fk": _example1_fk,
        "example1_fstar": lambda: _unif(0.0, 2.0, measure=_example1_measure()),
        "example2_fk": _example2_fk,
        "example2_ga": _example2_ga,
        "example2_f0": _example2_f0,
        "unif": _unif,
        "normal": _normal,
        "mixture": _mixture,
        "ald": make_ald,
    }
    if name not in builders:
        raise DomainError(f"unknown catalog density {name!r}")
    return builders[name](**params)
