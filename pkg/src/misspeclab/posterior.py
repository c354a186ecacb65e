"""Finite-family Bayesian posterior engine with an f* baseline.

The state keeps, per member, the accumulated log relative likelihood
sum_i (log f(Y_i) - log f*(Y_i)).  Normalizing by the baseline member is
the posterior formula's own structure, so the log-sum-exp stabilization
is not an extra trick: the member weights are
prior * exp(log_rel_lik), renormalized.

States are immutable; ``posterior_update`` returns a new snapshot, so
trajectories for different seeds can run fully in parallel and snapshots
can be queried concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy import special as _scispec

from .divergences import weighted_l1
from .errors import (
    AllZeroLikelihood,
    BaselineZeroLikelihood,
    DomainError,
    MetricError,
)
from .measures import Density, integrate
from .projection import FiniteFamily
from .report import ExperimentReport

__all__ = [
    "PosteriorState",
    "RegionQuery",
    "posterior_init",
    "posterior_update",
    "region_mass",
    "run_trajectory",
    "make_weak_query",
]


@dataclass(frozen=True)
class RegionQuery:
    """A posterior region to track: metric-ball complement, weak-neighborhood
    complement, or a covering shell.

    For metric kinds, ``metric`` is d(f, g) and the region is measured
    around the baseline member.  Weak queries carry precomputed member
    moments (built by ``make_weak_query``).
    """

    kind: str  # "metric_ball_complement" | "weak_nbhd_complement" | "shell"
    query_id: str
    eps: float | None = None
    j: int | None = None
    metric: Callable[[Density, Density], float] | None = None
    member_moments: tuple[tuple[float, ...], ...] | None = None
    center_moments: tuple[float, ...] | None = None
    eps_k: tuple[float, ...] | None = None
    degenerate: bool = False

    def __post_init__(self):
        kinds = ("metric_ball_complement", "weak_nbhd_complement", "shell")
        if self.kind not in kinds:
            raise DomainError(f"unknown query kind {self.kind!r}")
        if self.kind in ("metric_ball_complement", "shell") and (
            self.eps is None or self.eps <= 0
        ):
            raise DomainError("metric queries need eps > 0")
        if self.kind == "shell" and (self.j is None or self.j < 1):
            raise DomainError("shell queries need j >= 1")


@dataclass(frozen=True)
class PosteriorState:
    family: FiniteFamily
    fstar_index: int
    log_rel_lik: np.ndarray
    n: int

    def masses(self) -> np.ndarray:
        """Posterior member masses: softmax of log prior + log relative lik."""
        logw = self.family.log_prior() + self.log_rel_lik
        norm = _scispec.logsumexp(logw)
        if norm == -math.inf:
            raise AllZeroLikelihood("posterior has collapsed to zero mass")
        m = np.exp(logw - norm)
        return m / m.sum()

    def log_denominator(self) -> float:
        """log of the prior-mixture relative likelihood (posterior denominator)."""
        return float(_scispec.logsumexp(self.family.log_prior() + self.log_rel_lik))


def posterior_init(family: FiniteFamily, fstar_index: int) -> PosteriorState:
    """Fresh state at n = 0: posterior mass equals the prior."""
    if not 0 <= fstar_index < len(family):
        raise IndexError(f"fstar_index {fstar_index} out of range")
    lrl = np.zeros(len(family))
    lrl.setflags(write=False)
    return PosteriorState(family=family, fstar_index=int(fstar_index), log_rel_lik=lrl, n=0)


def posterior_update(state: PosteriorState, y: float) -> PosteriorState:
    """Absorb one observation; members with zero likelihood at y go to
    -inf relative log likelihood permanently."""
    logs = np.array([float(m.log_pdf(y)) for m in state.family.members])
    if np.all(logs == -math.inf):
        raise AllZeroLikelihood(f"every member has zero likelihood at y={y}")
    base = logs[state.fstar_index]
    if base == -math.inf:
        raise BaselineZeroLikelihood(
            f"baseline member has zero likelihood at y={y}; the relative-"
            "likelihood representation needs f*(y) > 0"
        )
    lrl = state.log_rel_lik + (logs - base)
    lrl.setflags(write=False)
    return replace(state, log_rel_lik=lrl, n=state.n + 1)


def _member_mask(state: PosteriorState, q: RegionQuery, metric_fn) -> np.ndarray:
    family = state.family
    if q.kind == "weak_nbhd_complement":
        if q.member_moments is None or q.center_moments is None or q.eps_k is None:
            raise DomainError("weak query lacks precomputed moments; use make_weak_query")
        moments = np.asarray(q.member_moments)  # (members, k)
        center = np.asarray(q.center_moments)
        eps_k = np.asarray(q.eps_k)
        return np.any(np.abs(moments - center[None, :]) >= eps_k[None, :], axis=1)
    metric = metric_fn if metric_fn is not None else q.metric
    if metric is None:
        raise MetricError("metric query without a metric function")
    d = family.distances_to(state.fstar_index, metric)
    if q.kind == "metric_ball_complement":
        return d >= q.eps
    # shell: j*eps <= d < (j+1)*eps
    return (d >= q.j * q.eps) & (d < (q.j + 1) * q.eps)


def region_mass(state: PosteriorState, q: RegionQuery, metric_fn=None) -> float:
    """Posterior mass of the queried region (deterministic given the state)."""
    mask = _member_mask(state, q, metric_fn)
    if not mask.any():
        return 0.0
    return float(state.masses()[mask].sum())


def make_weak_query(
    family: FiniteFamily,
    f0: Density,
    fstar: Density,
    test_functions: Sequence[Callable[[float], float]],
    eps_k: Sequence[float],
    query_id: str = "weak",
    tol: float = 1e-8,
) -> RegionQuery:
    """Complement of a weak neighborhood of f*: some bounded test function
    phi_k has |int phi_k f d mu0 - int phi_k f* d mu0| >= eps_k.

    Member moments are n-independent, so they are computed once here.  A
    test function whose moment spread over the family is zero cannot
    separate anything; the query is then flagged degenerate.
    """
    if len(test_functions) != len(eps_k):
        raise DomainError("need one eps_k per test function")

    def mu0_moment(member: Density, phi) -> float:
        def integrand(y):
            lf0 = float(f0.log_pdf(y))
            if lf0 == -math.inf:
                return 0.0
            w = math.exp(lf0 - float(fstar.log_pdf(y)))
            return float(phi(y)) * float(np.exp(member.log_pdf(y))) * w

        bps = tuple(sorted(set(member.breakpoints) | set(f0.breakpoints) | set(fstar.breakpoints)))
        value, _ = integrate(integrand, family.measure, tol=tol, breakpoints=bps)
        return value

    moments = tuple(
        tuple(mu0_moment(m, phi) for phi in test_functions) for m in family.members
    )
    center = tuple(mu0_moment(fstar, phi) for phi in test_functions)
    arr = np.asarray(moments)
    # a test function that cannot separate any pair of members is useless
    degenerate = bool(np.all(arr.max(axis=0) - arr.min(axis=0) < 1e-10))
    return RegionQuery(
        kind="weak_nbhd_complement",
        query_id=query_id + ("_degenerate" if degenerate else ""),
        member_moments=moments,
        center_moments=center,
        eps_k=tuple(float(e) for e in eps_k),
        degenerate=degenerate,
    )


def run_trajectory(
    f0: Density,
    family: FiniteFamily,
    fstar_index: int,
    queries: Sequence[RegionQuery],
    n_max: int,
    seed: int,
    stream_id: int = 0,
    beta_grid: Sequence[float] = (0.1,),
    record_every: int = 1,
) -> ExperimentReport:
    """Sample Y_1..Y_n_max i.i.d. from f0 and record query masses per n.

    Each recorded n also carries the denominator diagnostic
    n*beta + log(posterior denominator) for every beta in beta_grid,
    under query ids ``denom_growth_b<beta>`` (log scale, in the mass column).
    """
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    batch = f0.sample(n_max, seed, stream_id)
    state = posterior_init(family, fstar_index)

    rows: list[tuple] = []

    def record(st: PosteriorState):
        logden = st.log_denominator()
        for q in queries:
            rows.append((st.n, q.query_id, region_mass(st, q), logden, seed))
        for beta in beta_grid:
            rows.append(
                (st.n, f"denom_growth_b{beta:g}", st.n * beta + logden, logden, seed)
            )

    for i, y in enumerate(batch.values, start=1):
        state = posterior_update(state, float(y))
        if i % record_every == 0 or i == n_max:
            record(state)

    config = {
        "f0": f0.label,
        "members": len(family),
        "fstar_index": int(fstar_index),
        "n_max": int(n_max),
        "seed": int(seed),
        "stream_id": int(stream_id),
        "beta_grid": [float(b) for b in beta_grid],
        "record_every": int(record_every),
        "queries": [q.query_id for q in queries],
    }
    return ExperimentReport.build(
        config=config,
        columns=("n", "query_id", "mass", "log_denominator", "seed"),
        rows=rows,
    )
