"""Numerical assumption checkers and minimax/implication verification.

Each checker evaluates a concentration assumption on a concrete finite
family and returns a witness object with a verdict and the numeric
certificate behind it.  Verdicts are three-valued: ``holds`` and ``fails``
require a checked certificate; ``inconclusive`` records that a grid search
ran out without deciding (a failed search does not prove an assumption
false).

Convexity-dependent statements (minimax identities, implication
equivalence on hulls) are verified on finite discrete sample spaces where
mixtures and optima are exactly enumerable; those paths run on probability
vectors via the ``finite`` module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import finite
from .divergences import alpha_affinity, kl, kl_excess, weighted_l1
from .errors import CoverageGap, DomainError, GridTooCoarse, MetricError
from .measures import Density
from .projection import FiniteFamily

__all__ = [
    "AssumptionWitness",
    "SieveSpec",
    "ModulusEstimate",
    "CoveringReport",
    "ShellCover",
    "MinimaxGap",
    "ImplicationReport",
    "check_assumption1",
    "check_assumption2c",
    "check_sufficient_2c",
    "check_assumption4",
    "minimax_gap",
    "check_implications",
    "covering_numbers",
    "check_sieve",
    "witness_to_json",
    "dyadic_grid",
]

HOLDS = "holds"
FAILS = "fails"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class AssumptionWitness:
    """Verdict plus certificate for one assumption on one instance."""

    assumption_id: str
    verdict: str
    epsilon: float | None = None
    delta: float | None = None
    alpha0: float | None = None
    witness: object = None
    certificate: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in (HOLDS, FAILS, INCONCLUSIVE):
            raise DomainError(f"unknown verdict {self.verdict!r}")

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS


def witness_to_json(w: AssumptionWitness) -> str:
    payload = {
        "assumption_id": w.assumption_id,
        "verdict": w.verdict,
        "epsilon": w.epsilon,
        "delta": w.delta,
        "alpha0": w.alpha0,
        "witness": w.witness if isinstance(w.witness, (int, float, str, list, type(None))) else str(w.witness),
        "certificate": {k: (v if isinstance(v, (int, float, str, bool, list, type(None))) else str(v)) for k, v in w.certificate.items()},
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def dyadic_grid(depth: int = 10) -> tuple[float, ...]:
    """The dyadic search grid 2^-1, 2^-2, ..., used for (alpha, delta) witnesses."""
    return tuple(2.0**-i for i in range(1, depth + 1))


# ---------------------------------------------------------------------------
# Assumption 1: prior mass of KL-excess neighborhoods
# ---------------------------------------------------------------------------


def check_assumption1(
    family: FiniteFamily,
    f0: Density,
    fstar_index: int,
    eps_grid: Sequence[float],
    tol: float = 1e-9,
) -> AssumptionWitness:
    """Prior mass of {f : K*(f0, f) < eps} for each eps; holds iff all positive."""
    fstar = family.members[fstar_index]
    excess = np.array(
        [kl_excess(f0, m, fstar, tol=tol).value for m in family.members]
    )
    masses = {}
    offending = None
    for eps in eps_grid:
        mass = float(family.prior[excess < eps].sum())
        masses[float(eps)] = mass
        if mass <= 0.0 and offending is None:
            offending = float(eps)
    verdict = HOLDS if offending is None else FAILS
    return AssumptionWitness(
        assumption_id="A1",
        verdict=verdict,
        epsilon=offending,
        witness=offending,
        certificate={"eps_mass": sorted(masses.items()), "kl_excess": excess.tolist()},
    )


# ---------------------------------------------------------------------------
# Assumption 2c and its sufficient conditions
# ---------------------------------------------------------------------------


def check_assumption2c(
    family: FiniteFamily,
    f0: Density,
    fstar_index: int,
    eps: float,
    metric_fn: Callable[[Density, Density], float],
    alpha_grid: Sequence[float] | None = None,
    delta_grid: Sequence[float] | None = None,
    strengthened: bool = False,
    tol: float = 1e-9,
) -> AssumptionWitness:
    """Search dyadic (alpha0, delta) with {h_alpha0 > e^-delta} inside the eps-ball.

    Holds with the found witness pair; fails when some member beyond the
    eps-ball keeps affinity 1 at every candidate alpha0 (no pair can ever
    exclude it); inconclusive otherwise.

    ``strengthened`` pins delta to eps**2 (the form some covering arguments
    need).  Whether that strengthening is attainable is instance-specific,
    so the flag only narrows the search; it never infers attainability.
    """
    alphas = tuple(alpha_grid) if alpha_grid is not None else dyadic_grid()
    if strengthened:
        deltas = (float(eps) ** 2,)
    else:
        deltas = tuple(delta_grid) if delta_grid is not None else dyadic_grid()
    fstar = family.members[fstar_index]
    d = family.distances_to(fstar_index, metric_fn)
    inside = d < eps
    h = np.array(
        [
            [alpha_affinity(f0, fstar, m, a, tol=tol).value for a in alphas]
            for m in family.members
        ]
    )
    for a_idx, a in enumerate(alphas):
        for delt in deltas:
            thresh = math.exp(-delt)
            selected = h[:, a_idx] > thresh
            if np.all(inside[selected]):
                return AssumptionWitness(
                    assumption_id="A2c",
                    verdict=HOLDS,
                    epsilon=float(eps),
                    delta=float(delt),
                    alpha0=float(a),
                    certificate={"n_selected": int(selected.sum())},
                )
    far = ~inside
    stuck = far & np.all(h >= 1.0 - 1e-9, axis=1)
    if stuck.any():
        idx = int(np.argmax(stuck))
        return AssumptionWitness(
            assumption_id="A2c",
            verdict=FAILS,
            epsilon=float(eps),
            witness=idx,
            certificate={"member_max_h": float(h[idx].max()), "distance": float(d[idx])},
        )
    return AssumptionWitness(
        assumption_id="A2c",
        verdict=INCONCLUSIVE,
        epsilon=float(eps),
        certificate={"grid_depth": len(alphas)},
    )


def check_sufficient_2c(
    family: FiniteFamily,
    f0: Density,
    fstar_index: int,
    alpha0: float,
    tol: float = 1e-8,
    probe_points: int = 512,
) -> AssumptionWitness:
    """Sufficient conditions: sup E0(f/f*)^alpha0 <= 1 and sup E0(f/f*)^2 finite.

    Also reports sup |log f/f*| over an f0-support probe grid when finite
    (the bounded log-likelihood-ratio route), and flags members whose
    support misses f0-mass.
    """
    fstar = family.members[fstar_index]
    sup_h = -math.inf
    sup_sq = -math.inf
    sup_logratio = 0.0
    logratio_finite = True
    mismatch: list[int] = []
    probes = _support_probes(f0, probe_points)
    lf0 = f0.log_pdf(probes)
    lfs = fstar.log_pdf(probes)
    on = lf0 > -math.inf
    for idx, m in enumerate(family.members):
        sup_h = max(sup_h, alpha_affinity(f0, fstar, m, alpha0, tol=tol).value)
        sq = _second_moment(f0, fstar, m, tol=tol)
        sup_sq = max(sup_sq, sq)
        lr = np.asarray(m.log_pdf(probes)) - np.asarray(lfs)
        lr_on = lr[on]
        if np.any(np.isneginf(lr_on)):
            mismatch.append(idx)
            logratio_finite = False
        else:
            sup_logratio = max(sup_logratio, float(np.max(np.abs(lr_on))))
    ok = sup_h <= 1.0 + tol and math.isfinite(sup_sq)
    return AssumptionWitness(
        assumption_id="A2c-sufficient",
        verdict=HOLDS if ok else FAILS,
        alpha0=float(alpha0),
        witness=mismatch or None,
        certificate={
            "sup_h_alpha0": float(sup_h),
            "sup_second_moment": float(sup_sq),
            "sup_abs_log_ratio": float(sup_logratio) if logratio_finite else math.inf,
            "support_mismatch_members": mismatch,
        },
    )


def _support_probes(f0: Density, n: int) -> np.ndarray:
    pts: list[np.ndarray] = []
    finite_ivs = [
        (a, b) for a, b in f0.support.intervals if math.isfinite(a) and math.isfinite(b)
    ]
    total = sum(b - a for a, b in finite_ivs)
    for a, b in finite_ivs:
        k = max(8, int(n * (b - a) / total)) if total > 0 else n
        pts.append(np.linspace(a + 1e-9 * (b - a), b - 1e-9 * (b - a), k))
    for a, b in f0.support.intervals:
        if not (math.isfinite(a) and math.isfinite(b)):
            lo = a if math.isfinite(a) else -30.0
            hi = b if math.isfinite(b) else 30.0
            pts.append(np.linspace(lo, hi, n))
    if f0.support.atoms:
        pts.append(np.asarray(f0.support.atoms, dtype=float))
    return np.concatenate(pts) if pts else np.zeros(1)


def _second_moment(f0: Density, fstar: Density, f: Density, tol: float) -> float:
    """E0 (f/f*)^2 by quadrature; +inf when the error budget blows up."""
    from .measures import integrate  # local import to keep module load cheap

    measure = f0.measure.merge(fstar.measure).merge(f.measure)
    bps = tuple(sorted(set(f0.breakpoints) | set(fstar.breakpoints) | set(f.breakpoints)))

    def integrand(y):
        lf0 = float(f0.log_pdf(y))
        if lf0 == -math.inf:
            return 0.0
        lf = float(f.log_pdf(y))
        if lf == -math.inf:
            return 0.0
        return math.exp(lf0 + 2.0 * (lf - float(fstar.log_pdf(y))))

    try:
        value, _ = integrate(integrand, measure, tol=max(tol, 1e-8), breakpoints=bps)
    except Exception:
        return math.inf
    return value


# ---------------------------------------------------------------------------
# Assumption 4: modulus of continuity of the relative likelihood
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModulusEstimate:
    """Fitted monotone envelope eta for E0|f1/f* - f2/f*| <= eta(d(f1,f2))."""

    distances: tuple[float, ...]
    left_sides: tuple[float, ...]
    max_violation: float  # excess of the left side over the identity envelope
    fitted_slope: float
    verdict: str

    def eta(self, d: float) -> float:
        """Smallest monotone step envelope through the sampled pairs."""
        out = 0.0
        for di, li in zip(self.distances, self.left_sides):
            if di <= d:
                out = max(out, li)
        return out


def check_assumption4(
    family_pairs_sample: Sequence[tuple[Density, Density]],
    f0: Density,
    fstar: Density,
    metric_fn: Callable[[Density, Density], float],
    tol: float = 1e-8,
) -> ModulusEstimate:
    """Estimate the modulus eta from sampled pairs.

    The left side E0|f1/f* - f2/f*| is the weighted-L1 distance, so for
    d = L1(mu0) the envelope is the identity by definition and the reported
    violation is pure quadrature noise.
    """
    if len(family_pairs_sample) < 1:
        raise DomainError("need at least one pair")
    ds: list[float] = []
    ls: list[float] = []
    for fa, fb in family_pairs_sample:
        d = float(metric_fn(fa, fb))
        if math.isnan(d) or d < 0:
            raise MetricError("metric returned NaN or negative distance")
        lhs = weighted_l1(fa, fb, f0, fstar, tol=tol).value
        ds.append(d)
        ls.append(lhs)
    order = np.argsort(ds)
    ds_sorted = tuple(float(ds[i]) for i in order)
    ls_sorted = tuple(float(ls[i]) for i in order)
    violation = max(0.0, max(l - d for l, d in zip(ls_sorted, ds_sorted)))
    slopes = [l / d for l, d in zip(ls_sorted, ds_sorted) if d > 1e-12]
    fitted = max(slopes) if slopes else 0.0
    finite = all(math.isfinite(l) for l in ls_sorted)
    # eta(0+) -> 0 trend: the smallest-distance pairs must have small left side
    if not finite:
        verdict = FAILS
    elif len(ds_sorted) < 3:
        verdict = INCONCLUSIVE
    else:
        d_min, l_min = ds_sorted[0], ls_sorted[0]
        l_max = max(ls_sorted)
        trend_ok = (l_min <= max(0.25 * l_max, 10 * tol)) and (
            d_min <= 0.5 * ds_sorted[-1] or l_min <= 10 * tol
        )
        verdict = HOLDS if trend_ok else INCONCLUSIVE
    return ModulusEstimate(
        distances=ds_sorted,
        left_sides=ls_sorted,
        max_violation=violation,
        fitted_slope=float(fitted),
        verdict=verdict,
    )


# ---------------------------------------------------------------------------
# Minimax identities on discrete hulls
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinimaxGap:
    lhs: float  # inf over alpha of sup over f (or inf over f of sup over alpha)
    rhs: float  # the swapped order
    gap: float
    resolution: int
    n_alphas: int


def _affinity_objective(f0, fstar, hull, alphas):
    return finite.h_alpha_matrix(f0, fstar, hull, alphas)


def _normalized_objective(f0, fstar, hull, alphas):
    """g(alpha, f): K* at alpha=0, (1-h_alpha)/alpha inside, 1-E0(f/f*) at 1."""
    H = finite.h_alpha_matrix(f0, fstar, hull, alphas)
    out = np.empty_like(H)
    for i, a in enumerate(alphas):
        if a == 0.0:
            out[i] = np.array([finite.kstar_vec(f0, fstar, f) for f in hull])
        elif a == 1.0:
            out[i] = 1.0 - H[i]
        else:
            out[i] = (1.0 - H[i]) / a
    return out


def minimax_gap(
    hull_generators,
    f0,
    fstar,
    alpha_grid: Sequence[float] | None = None,
    f_grid_refine: int = 120,
    objective: str = "affinity",
    target: float = 1e-3,
    max_escalations: int = 3,
) -> MinimaxGap:
    """Both iterated optima of the affinity (or its normalized variant) on a
    discretized generator hull, by exhaustive grids with escalation.

    For ``affinity``: lhs = min_alpha max_f h, rhs = max_f min_alpha h.
    For ``normalized``: lhs = min_f max_alpha g, rhs = max_alpha min_f g.
    Raises GridTooCoarse when escalation cannot close the gap to target.
    """
    f0 = finite.validate_pvec(f0, "f0")
    fstar = np.asarray(fstar, float)
    G = np.atleast_2d(np.asarray(hull_generators, float))
    if G.shape[1] > 8:
        raise DomainError("finite sample space must have at most 8 points")
    if objective not in ("affinity", "normalized"):
        raise DomainError(f"unknown objective {objective!r}")

    res = int(f_grid_refine)
    n_alpha = len(alpha_grid) if alpha_grid is not None else 1501
    for escalation in range(max_escalations + 1):
        alphas = (
            np.asarray(alpha_grid, float)
            if alpha_grid is not None
            else np.linspace(0.0, 1.0, n_alpha)
        )
        hull = finite.hull_points(G, res)
        if objective == "affinity":
            H = _affinity_objective(f0, fstar, hull, alphas)
            lhs = float(H.max(axis=1).min())  # min over alpha of max over f
            rhs = float(H.min(axis=0).max())  # max over f of min over alpha
        else:
            H = _normalized_objective(f0, fstar, hull, alphas)
            lhs = float(H.max(axis=0).min())  # min over f of max over alpha
            rhs = float(H.min(axis=1).max())  # max over alpha of min over f
        gap = abs(lhs - rhs)
        if gap <= target:
            return MinimaxGap(lhs=lhs, rhs=rhs, gap=gap, resolution=res, n_alphas=len(alphas))
        res *= 2
        if alpha_grid is None:
            n_alpha = 2 * n_alpha - 1
    raise GridTooCoarse(
        f"minimax gap {gap:.3e} above target {target:.0e} after {max_escalations} refinements"
    )


# ---------------------------------------------------------------------------
# The three-condition implication report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImplicationReport:
    """Evaluation of the three divergence conditions on one instance.

    ``implied_*`` record the derived implications actually used downstream:
    if (iii) holds at (alpha0, eta) then sup_f inf_alpha h < e^-eta, and if
    (ii) holds at delta then inf K* >= delta.  ``sound`` is their
    conjunction (vacuously true antecedents count as sound).
    """

    inf_kstar: float
    sup_inf_alpha: float
    sup_h_alpha0: float
    eps: float
    delta: float
    eta: float
    alpha0: float
    cond_i: bool
    cond_ii: bool
    cond_iii: bool
    implied_ii_ok: bool | None
    implied_i_ok: bool | None
    convex_witness: tuple[float, float] | None = None

    @property
    def sound(self) -> bool:
        checks = [c for c in (self.implied_ii_ok, self.implied_i_ok) if c is not None]
        return all(checks)


def check_implications(
    members,
    f0,
    fstar,
    eps: float,
    delta: float,
    eta: float,
    alpha0: float,
    convex_hull: bool = False,
    resolution: int = 60,
    alpha_points: int = 2001,
) -> ImplicationReport:
    """Evaluate conditions (i), (ii), (iii) on a finite instance.

    ``members`` are density rows on a finite space; with ``convex_hull``
    they are treated as generators and the evaluation runs on a barycentric
    discretization.  On hull instances satisfying (i), a dyadic witness
    search for (iii) is attempted (the equivalence direction).
    """
    f0 = finite.validate_pvec(f0, "f0")
    fstar = np.asarray(fstar, float)
    F = np.atleast_2d(np.asarray(members, float))
    if convex_hull:
        F = finite.hull_points(F, resolution)
    alphas = np.linspace(0.0, 1.0, alpha_points)
    H = finite.h_alpha_matrix(f0, fstar, F, alphas)
    kstars = np.array([finite.kstar_vec(f0, fstar, f) for f in F])
    inf_kstar = float(kstars.min())
    sup_inf_alpha = float(H.min(axis=0).max())
    h_at_alpha0 = finite.h_alpha_matrix(f0, fstar, F, [alpha0])[0]
    sup_h_alpha0 = float(h_at_alpha0.max())

    cond_i = inf_kstar > eps
    cond_ii = sup_inf_alpha < math.exp(-delta)
    cond_iii = sup_h_alpha0 < math.exp(-eta)

    # derived implications (grid mins over alpha overestimate the true inf,
    # so cond_ii/cond_iii certified on the grid imply their true versions)
    implied_ii_ok = (sup_inf_alpha < math.exp(-eta) + 1e-12) if cond_iii else None
    implied_i_ok = (inf_kstar >= delta - 1e-9) if cond_ii else None

    convex_witness = None
    if convex_hull and cond_i:
        for a in dyadic_grid(12):
            h_a = finite.h_alpha_matrix(f0, fstar, F, [a])[0]
            sup_h = float(h_a.max())
            if sup_h < 1.0:
                convex_witness = (a, -math.log(sup_h))
                break

    return ImplicationReport(
        inf_kstar=inf_kstar,
        sup_inf_alpha=sup_inf_alpha,
        sup_h_alpha0=sup_h_alpha0,
        eps=float(eps),
        delta=float(delta),
        eta=float(eta),
        alpha0=float(alpha0),
        cond_i=bool(cond_i),
        cond_ii=bool(cond_ii),
        cond_iii=bool(cond_iii),
        implied_ii_ok=implied_ii_ok,
        implied_i_ok=implied_i_ok,
        convex_witness=convex_witness,
    )


# ---------------------------------------------------------------------------
# Covering numbers for metric shells
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShellCover:
    j: int
    member_indices: tuple[int, ...]
    n_balls: int
    centers: tuple[int, ...]


@dataclass(frozen=True)
class CoveringReport:
    epsilon: float
    shells: tuple[ShellCover, ...]

    def n_j(self) -> dict[int, int]:
        return {s.j: s.n_balls for s in self.shells}


def covering_numbers(
    family: FiniteFamily,
    fstar_index: int,
    metric_fn: Callable[[Density, Density], float],
    eps: float,
) -> CoveringReport:
    """Greedy cover of each shell S_j = {j*eps <= d(f, f*) < (j+1)*eps} by
    balls of radius j*eps/3 centered at shell members.

    Greedy set cover upper-bounds the minimum covering number; the theorem
    only needs sup_j N_j finite, so an upper bound is enough.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    d = family.distances_to(fstar_index, metric_fn)
    n = len(family)
    pairwise = np.zeros((n, n))
    shells: list[ShellCover] = []
    max_j = int(math.floor(float(d.max()) / eps)) if n else 0
    need_pairwise = False
    for j in range(1, max_j + 1):
        members = np.where((d >= j * eps) & (d < (j + 1) * eps))[0]
        if len(members) == 0:
            shells.append(ShellCover(j=j, member_indices=(), n_balls=0, centers=()))
            continue
        if not need_pairwise:
            for a in range(n):
                for b in range(a + 1, n):
                    dist = float(metric_fn(family.members[a], family.members[b]))
                    if math.isnan(dist) or dist < 0:
                        raise MetricError("metric returned NaN or negative distance")
                    pairwise[a, b] = pairwise[b, a] = dist
            need_pairwise = True
        radius = j * eps / 3.0
        uncovered = set(int(i) for i in members)
        centers: list[int] = []
        while uncovered:
            best_center, best_cover = None, set()
            for c in members:
                cover = {i for i in uncovered if pairwise[c, i] <= radius}
                if len(cover) > len(best_cover):
                    best_center, best_cover = int(c), cover
            if best_center is None:  # isolated points cover themselves
                best_center = next(iter(uncovered))
                best_cover = {best_center}
            centers.append(best_center)
            uncovered -= best_cover
        shells.append(
            ShellCover(
                j=j,
                member_indices=tuple(int(i) for i in members),
                n_balls=len(centers),
                centers=tuple(centers),
            )
        )
    return CoveringReport(epsilon=float(eps), shells=tuple(shells))


# ---------------------------------------------------------------------------
# Sieve verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SieveSpec:
    """A sieve (V_n, W_n) as member-index predicates per n.

    ``v_n`` and ``w_n`` map (n, member_index) -> bool.  ``delta`` is the
    claimed prior-decay exponent; ``j_coeff`` = (a, r) bounds the covering
    count J_n <= a * n**r (for finite families J_n is the V_n member count:
    each member is its own zero-radius ball).
    """

    v_n: Callable[[int, int], bool]
    w_n: Callable[[int, int], bool]
    delta: float
    j_coeff: tuple[float, float]


def check_sieve(
    spec: SieveSpec,
    family: FiniteFamily,
    f0: Density,
    fstar_index: int,
    n_values: Sequence[int] = (1, 2, 5, 10, 20, 50, 100, 200),
    tol: float = 1e-9,
) -> AssumptionWitness:
    """Verify prior decay of W_n, the polynomial J_n bound, coverage, and
    Delta > 2 E0 log(f0/f*) on the sampled n values."""
    fstar = family.members[fstar_index]
    base_kl = kl(f0, fstar, tol=tol).value
    delta_ok = spec.delta > 2.0 * base_kl
    a, r = spec.j_coeff
    per_n = []
    decay_ok = True
    jn_ok = True
    for n in n_values:
        in_v = [spec.v_n(n, i) for i in range(len(family))]
        in_w = [spec.w_n(n, i) for i in range(len(family))]
        missing = [i for i in range(len(family)) if not (in_v[i] or in_w[i])]
        if missing:
            raise CoverageGap(f"members {missing} in neither V_n nor W_n at n={n}")
        w_mass = float(family.prior[np.array(in_w, dtype=bool)].sum()) if any(in_w) else 0.0
        bound = math.exp(-n * spec.delta)
        j_n = sum(in_v)
        per_n.append((int(n), w_mass, bound, j_n))
        if w_mass >= bound and w_mass > 0.0:
            decay_ok = False
        if j_n > a * n**r:
            jn_ok = False
    ok = delta_ok and decay_ok and jn_ok
    return AssumptionWitness(
        assumption_id="A3",
        verdict=HOLDS if ok else FAILS,
        delta=float(spec.delta),
        certificate={
            "2_kl_to_fstar": 2.0 * base_kl,
            "delta_exceeds_2kl": delta_ok,
            "w_mass_decay_ok": decay_ok,
            "j_n_polynomial_ok": jn_ok,
            "per_n": per_n,
        },
    )
