"""Packaged experiments: the two counterexample scenarios and the i.i.d.
model scenarios (grid mixtures, normal regression, quantile regression).

The atom-tail counterexample (scenario id ``example2``) is computed
entirely in log space: its truth puts visible probability within 1e-15 of
y = 1, so posterior lower bounds live at scales like exp(-n) where naive
float subtraction is meaningless.  The exact posterior lower bound
A_n / (1 + A_n) uses the closed-form denominator, so grid discretization
of the prior never touches it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special as _scispec

from .divergences import kl, kl_excess, l1, weighted_l1
from .errors import DomainError, MomentError, PostconditionError, TruncationError
from .measures import BaseMeasure, Density, catalog, integrate, make_ald
from .posterior import RegionQuery, make_weak_query
from .projection import FiniteFamily, kl_minimizer
from .report import ExperimentReport
from .streams import stream

__all__ = [
    "example1_report",
    "Example2State",
    "example2_lower_bound",
    "example2_log_kept_sum",
    "example2_kept_sum_recurrence",
    "example2_simulate",
    "example2_summary",
    "RegressionScenario",
    "build_regression_scenario",
    "ald_ratio_bound_test",
    "MixtureSpec",
    "mixture_scenario",
]

_LOG2 = math.log(2.0)


# ---------------------------------------------------------------------------
# Two-step counterexample family (scenario id "example1")
# ---------------------------------------------------------------------------


def example1_report(b_values: Sequence[float], tol: float = 1e-9) -> ExperimentReport:
    """Divergence table for the two-step family f_b against f0 = unif(0,1).

    Columns per b: the raw divergence kl = E0 log(f0/f_b) (which decreases
    to log 2 as b increases to 1/2), its excess over the unif(0,2) baseline
    (which decreases to 0), and the plain / weighted L1 distances to the
    baseline.  Postconditions: kl strictly decreasing in b, and the plain
    L1 distance stays above 1/4 for every b.
    """
    bs = [float(b) for b in b_values]
    for b in bs:
        if not 0.0 < b < 0.5:
            raise DomainError(f"b must lie in (0, 1/2), got {b}")
    f0 = catalog("unif", lo=0.0, hi=1.0)
    fstar = catalog("example1_fstar")
    rows = []
    for b in bs:
        fb = catalog("example1_fk", b=b)
        rows.append(
            (
                b,
                kl(f0, fb, tol=tol).value,
                kl_excess(f0, fb, fstar, tol=tol).value,
                l1(fb, fstar, tol=tol).value,
                weighted_l1(fb, fstar, f0, fstar, tol=tol).value,
            )
        )
    by_b = sorted(rows, key=lambda r: r[0])
    for (b1, k1, *_), (b2, k2, *_) in zip(by_b, by_b[1:]):
        if not k1 > k2:
            raise PostconditionError(f"kl not strictly decreasing between b={b1} and b={b2}")
    for b, _, _, l1mu, _ in rows:
        if not l1mu > 0.25:
            raise PostconditionError(f"plain L1 distance {l1mu} not above 1/4 at b={b}")
    config = {
        "scenario": "example1",
        "b_values": bs,
        "note": "kl decreases to log 2; kl_excess decreases to 0",
    }
    return ExperimentReport.build(
        config=config,
        columns=("b", "kl", "kl_excess", "l1_mu", "l1_mu0"),
        rows=rows,
    )


# ---------------------------------------------------------------------------
# Atom-tail counterexample (scenario id "example2"): exact lower bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Example2State:
    """Exact posterior lower bound state at sample size n.

    A_n = kept series / (2^-(n+1) * (1 - sqrt(m))) evaluated in log space;
    the posterior mass outside any small L1 ball is at least A_n/(1+A_n).
    """

    n: int
    log_one_minus_sqrt_Mn: float
    log_A_n: float
    A_n: float
    posterior_lower_bound: float
    k_max: int
    tail_bound_rel: float


def _series_log_terms(n: int, ks: np.ndarray) -> np.ndarray:
    """log of (1/2 - 1/k)^n * 2^-(k-1) for the atom members k >= 3."""
    return n * np.log(0.5 - 1.0 / ks) - (ks - 1.0) * _LOG2


def example2_log_kept_sum(n: int, k_max: int) -> float:
    """log of the truncated numerator series, summed by log-sum-exp."""
    ks = np.arange(3, k_max + 1, dtype=float)
    return float(_scispec.logsumexp(_series_log_terms(n, ks)))


def example2_kept_sum_recurrence(n_max: int, k_max: int) -> np.ndarray:
    """log kept sums for n = 1..n_max via the per-atom incremental recurrence.

    Each atom term obeys log t_k(n) = log t_k(n-1) + log(1/2 - 1/k); the
    recurrence path exists to cross-check the direct evaluation.
    """
    ks = np.arange(3, k_max + 1, dtype=float)
    log_t = -(ks - 1.0) * _LOG2  # n = 0
    step = np.log(0.5 - 1.0 / ks)
    out = np.empty(n_max)
    for i in range(n_max):
        log_t = log_t + step
        out[i] = _scispec.logsumexp(log_t)
    return out


def _certified_k_max(n: int, rel_tail_tol: float, k_start: int = 64, k_cap: int = 10_000_000) -> int:
    """Smallest truncation point whose geometric tail bound is certified.

    Tail bound: sum_{k>K} (1/2-1/k)^n 2^-(k-1) <= (1/2)^n * 2^-(K-1).
    """
    k = max(k_start, 4)
    while k <= k_cap:
        log_tail = -n * _LOG2 - (k - 1) * _LOG2
        log_kept = example2_log_kept_sum(n, k)
        if log_tail <= math.log(rel_tail_tol) + log_kept:
            return k
        k *= 2
    raise TruncationError(f"no certified truncation below {k_cap} atoms for n={n}")


def example2_lower_bound(
    n: int, log_one_minus_sqrt_m: float, rel_tail_tol: float = 1e-9
) -> Example2State:
    """Exact posterior lower bound A_n/(1+A_n) for a given running maximum.

    ``log_one_minus_sqrt_m`` is log(1 - sqrt(M_n)), supplied in log space
    because the interesting regime is near exp(-n).  The denominator of
    A_n is the closed form 2^-(n+1) * (1 - sqrt(m)), so no overflow can
    occur at any n.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if log_one_minus_sqrt_m > 0.0:
        raise DomainError("log(1 - sqrt(m)) must be <= 0")
    k_max = _certified_k_max(n, rel_tail_tol)
    log_kept = example2_log_kept_sum(n, k_max)
    log_tail = -n * _LOG2 - (k_max - 1) * _LOG2
    log_denom = -(n + 1) * _LOG2 + log_one_minus_sqrt_m
    log_a = log_kept - log_denom
    a_n = math.exp(log_a) if log_a < 700 else math.inf
    lower = float(_scispec.expit(log_a))
    return Example2State(
        n=int(n),
        log_one_minus_sqrt_Mn=float(log_one_minus_sqrt_m),
        log_A_n=float(log_a),
        A_n=a_n,
        posterior_lower_bound=lower,
        k_max=int(k_max),
        tail_bound_rel=float(math.exp(log_tail - log_kept)),
    )


def example2_simulate(
    n_max: int, replications: int, seed: int, rel_tail_tol: float = 1e-9
) -> ExperimentReport:
    """Seeded trajectories of the exact posterior lower bound.

    Per replication r the truth is sampled from its exact inverse CDF on
    stream (seed, r); log(1 - sqrt(M_n)) is carried via the stored tail
    exponents, so the event log(1 - sqrt(M_n)) < -n is decided exactly even
    where 1 - sqrt(M_n) underflows.  ``first_stable_n`` is the first n from
    which the event holds through the horizon (0 when it never does; the
    horizon is a surrogate for "for all large n", which fixes no explicit
    threshold).
    """
    if n_max > 10_000:
        raise DomainError("n_max above 10^4 is out of the desk-scale contract")
    if n_max < 1 or replications < 1:
        raise DomainError("n_max and replications must be >= 1")
    f0 = catalog("example2_f0")
    k_max = _certified_k_max(n_max, rel_tail_tol)
    log_kept = example2_kept_sum_recurrence(n_max, k_max)
    # certify the truncation for every recorded n, not just n_max
    ns = np.arange(1, n_max + 1, dtype=float)
    log_tails = -ns * _LOG2 - (k_max - 1) * _LOG2
    if np.any(log_tails > math.log(rel_tail_tol) + log_kept):
        raise TruncationError("per-n tail certification failed; raise k_max")

    rows = []
    for rep in range(replications):
        batch = f0.sample(n_max, seed, rep)
        e_run = np.maximum.accumulate(batch.tail_exponents)
        log1m = -e_run
        event = log1m < -ns
        stable = 0
        for i in range(n_max - 1, -1, -1):
            if event[i]:
                stable = i + 1
            else:
                break
        log_a = log_kept + (ns + 1.0) * _LOG2 + e_run
        lower = _scispec.expit(log_a)
        for i in range(n_max):
            rows.append(
                (
                    rep,
                    int(ns[i]),
                    float(lower[i]),
                    float(log1m[i]),
                    int(event[i]),
                    int(stable),
                )
            )
    config = {
        "scenario": "example2",
        "n_max": int(n_max),
        "replications": int(replications),
        "seed": int(seed),
        "k_max": int(k_max),
        "rel_tail_tol": rel_tail_tol,
    }
    return ExperimentReport.build(
        config=config,
        columns=("replication", "n", "lower_bound", "log1msqrtMn", "event", "first_stable_n"),
        rows=rows,
    )


def example2_summary(report: ExperimentReport) -> dict:
    """Cross-replication summary of a simulation report."""
    n_max = report.config["n_max"]
    finals = [row for row in report.rows if row[1] == n_max]
    lowers = np.array([row[2] for row in finals])
    stables = np.array([row[5] for row in finals])
    return {
        "replications": len(finals),
        "lower_bound_q05": float(np.quantile(lowers, 0.05)),
        "lower_bound_median": float(np.quantile(lowers, 0.5)),
        "lower_bound_min": float(lowers.min()),
        "first_stable_median": float(np.median(stables[stables > 0])) if (stables > 0).any() else math.nan,
        "n_never_stable": int((stables == 0).sum()),
    }


# ---------------------------------------------------------------------------
# Regression scenarios (normal and quantile likelihoods)
# ---------------------------------------------------------------------------


def _polyval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(x, coeffs)


@dataclass(frozen=True)
class RegressionScenario:
    """Gridded regression function class with a working likelihood.

    Joint member densities factor as phi(y - theta(x)) g(x); the covariate
    density g cancels in every likelihood ratio against the baseline, so
    members are represented by their conditional log likelihoods only.
    """

    kind: str  # "normal" | "ald"
    coeffs: tuple[tuple[float, ...], ...]
    theta0_index: int
    p0: Density
    x_density: Density
    bound: float
    tau: float | None = None

    def __post_init__(self):
        grid = np.linspace(0.0, 1.0, 513)
        for c in self.coeffs:
            if np.max(np.abs(_polyval(np.asarray(c), grid))) > self.bound + 1e-9:
                raise DomainError("a member exceeds the uniform bound M")

    @property
    def n_members(self) -> int:
        return len(self.coeffs)

    def theta(self, idx: int, x):
        return _polyval(np.asarray(self.coeffs[idx]), np.asarray(x, dtype=float))

    def member_log_lik(self, idx: int, x, y) -> np.ndarray:
        """Conditional log density log phi(y - theta(x)) of member idx."""
        resid = np.asarray(y, dtype=float) - self.theta(idx, x)
        if self.kind == "ald":
            tau = self.tau
            return math.log(tau * (1.0 - tau)) - resid * (tau - (resid <= 0))
        return -0.5 * math.log(2.0 * math.pi) - 0.5 * resid * resid

    def metric(self, i: int, j: int, tol: float = 1e-9) -> float:
        """rmse metric for the normal kind, mean absolute for the quantile kind."""
        ci = np.asarray(self.coeffs[i])
        cj = np.asarray(self.coeffs[j])

        if self.kind == "normal":
            def integrand(x):
                d = float(_polyval(ci, np.asarray(x)) - _polyval(cj, np.asarray(x)))
                return d * d * float(np.exp(self.x_density.log_pdf(x)))

            v, _ = integrate(integrand, self.x_density.measure, tol=tol,
                             breakpoints=self.x_density.breakpoints)
            return math.sqrt(max(v, 0.0))

        def integrand(x):
            d = float(_polyval(ci, np.asarray(x)) - _polyval(cj, np.asarray(x)))
            return abs(d) * float(np.exp(self.x_density.log_pdf(x)))

        v, _ = integrate(integrand, self.x_density.measure, tol=tol,
                         breakpoints=self.x_density.breakpoints)
        return v

    def sample_xy(self, n: int, seed: int, stream_id: int = 0):
        """Covariates i.i.d. from g, responses theta0(x) + Z with Z ~ p0."""
        x = self.x_density.sample(n, seed, 2 * stream_id).values
        z = self.p0.sample(n, seed, 2 * stream_id + 1).values
        y = self.theta(self.theta0_index, x) + z
        return x, y

    def posterior_masses(self, x, y) -> np.ndarray:
        """Posterior over members after observing (x, y), uniform prior."""
        ll = np.stack(
            [self.member_log_lik(i, x, y).sum() for i in range(self.n_members)]
        )
        ll = ll - ll.max()
        w = np.exp(ll)
        return w / w.sum()


def _probe_exponential_moment(p0: Density, m_rate: float) -> None:
    """Numeric probe of E exp(m_rate |Z|); raises MomentError on divergence.

    Growing truncations must stabilize; a 50% jump between the last two, an
    overflow, or a quadrature blowup all count as divergence.  Only the
    ratio matters, so the quadrature runs without an error budget.
    """
    from .errors import NonFinite, ToleranceNotMet

    totals = []
    for t_cut in (5.0, 10.0, 20.0, 40.0):
        measure = BaseMeasure(pieces=((-t_cut, t_cut),))

        def integrand(z):
            return math.exp(min(m_rate * abs(z) + float(p0.log_pdf(z)), 700.0))

        try:
            v, _ = integrate(integrand, measure, tol=1e300, breakpoints=(0.0,))
        except (NonFinite, ToleranceNotMet) as exc:
            raise MomentError(f"E exp({m_rate:g}|Z|) diverges numerically") from exc
        totals.append(v)
    if totals[-1] > 1.5 * totals[-2] or not math.isfinite(totals[-1]):
        raise MomentError(
            f"E exp({m_rate:g}|Z|) diverges numerically: truncations {totals}"
        )


def build_regression_scenario(kind: str, config: dict) -> RegressionScenario:
    """Build a regression scenario from a config dict.

    Required keys: ``theta_grid`` (list of coefficient tuples), ``theta0``
    (coefficients of the true regression function; must be a grid member),
    ``p0`` (residual Density), ``bound`` (uniform bound M).  Optional:
    ``tau`` (quantile level, ald kind), ``x_density`` (default unif(0,1)).

    The normal kind requires an exponential moment of the residual law and
    raises MomentError when the numeric probe diverges.
    """
    if kind not in ("normal", "ald"):
        raise DomainError(f"unknown regression kind {kind!r}")
    theta_grid = [tuple(float(c) for c in cs) for cs in config["theta_grid"]]
    if not theta_grid:
        raise DomainError("theta_grid must be nonempty")
    theta0 = tuple(float(c) for c in config["theta0"])
    if theta0 not in theta_grid:
        raise DomainError("theta0 must be a member of theta_grid")
    p0 = config["p0"]
    bound = float(config["bound"])
    x_density = config.get("x_density") or catalog("unif", lo=0.0, hi=1.0)
    tau = config.get("tau")
    if kind == "ald":
        if tau is None or not 0.0 < float(tau) < 1.0:
            raise DomainError("ald kind needs tau in (0,1)")
        tau = float(tau)
    else:
        _probe_exponential_moment(p0, m_rate=2.0 * bound)
    return RegressionScenario(
        kind=kind,
        coeffs=tuple(theta_grid),
        theta0_index=theta_grid.index(theta0),
        p0=p0,
        x_density=x_density,
        bound=bound,
        tau=tau,
    )


def ald_ratio_bound_test(tau: float, theta1, theta2, sample) -> float:
    """Signed slack of the pointwise quantile-likelihood ratio bound.

    Returns max over the sample of |log f_theta1/f_theta2| - |theta1(x) -
    theta2(x)|, which must be <= 0 up to float rounding: the quantile
    check-loss changes by at most the shift between the two regression
    functions.
    """
    x, y = np.asarray(sample[0], float), np.asarray(sample[1], float)
    c1 = np.asarray(theta1, float)
    c2 = np.asarray(theta2, float)
    t1 = _polyval(c1, x)
    t2 = _polyval(c2, x)
    r1 = y - t1
    r2 = y - t2
    log_ratio = -(r1 * (tau - (r1 <= 0))) + (r2 * (tau - (r2 <= 0)))
    return float(np.max(np.abs(log_ratio) - np.abs(t1 - t2)))


# ---------------------------------------------------------------------------
# Grid mixture scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureSpec:
    """Kernel mixtures over a finite z-grid with a simplex grid of weights.

    ``max_neighbor_gap`` bounds the L1 distance between kernels at adjacent
    grid points: the grid only resolves the mixing measure if the kernel is
    continuous in z at the grid's resolution.
    """

    kernel: Callable[[float], Density]
    z_grid: tuple[float, ...]
    weight_resolution: int = 4
    max_neighbor_gap: float = 1.0

    def weight_rows(self) -> np.ndarray:
        from .finite import barycentric_grid

        return barycentric_grid(len(self.z_grid), self.weight_resolution)


def mixture_scenario(
    spec: MixtureSpec,
    f0: Density,
    test_functions: Sequence[Callable[[float], float]],
    eps_k: Sequence[float] | None = None,
    tol: float = 1e-8,
) -> tuple[FiniteFamily, list[RegionQuery]]:
    """Family of grid mixtures plus weak-neighborhood complement queries.

    The query center is the family's KL minimizer from f0.  Test functions
    whose mu0-moments cannot separate any two members yield queries flagged
    degenerate (their mass is identically the mass of the empty set).
    """
    components = [spec.kernel(z) for z in spec.z_grid]
    by_z = [spec.kernel(z) for z in sorted(spec.z_grid)]
    for a, b in zip(by_z, by_z[1:]):
        gap = l1(a, b, tol=1e-6).value
        if gap > spec.max_neighbor_gap:
            raise DomainError(
                f"kernel jumps by L1 {gap:.3f} between adjacent z-grid points; "
                "refine z_grid or raise max_neighbor_gap"
            )
    W = spec.weight_rows()
    members = [
        catalog("mixture", components=components, weights=tuple(w)) for w in W
    ]
    prior = np.full(len(members), 1.0 / len(members))
    family = FiniteFamily(members=members, prior=prior, param=None)
    proj = kl_minimizer(f0, family, tol=1e-7)
    fstar = family.members[proj.index]
    if eps_k is None:
        eps_k = tuple(0.1 for _ in test_functions)
    queries = [
        make_weak_query(
            family, f0, fstar, [phi], [e], query_id=f"weak_{i}", tol=tol
        )
        for i, (phi, e) in enumerate(zip(test_functions, eps_k))
    ]
    return family, queries
