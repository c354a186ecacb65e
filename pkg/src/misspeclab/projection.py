"""KL projection onto a finite or gridded family.

Desk-scale families are finite, so the projection is an exact scan with
optional grid refinement rather than a continuous optimizer.  Ties are
surfaced, never silently broken: the theory downstream assumes a unique
minimizer, and a violated assumption must be visible in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .divergences import kl
from .errors import AllInfinite, DomainError, MetricError, WeightError
from .measures import BaseMeasure, Density

__all__ = ["FiniteFamily", "ProjectionResult", "kl_minimizer", "kl_profile"]


class FiniteFamily:
    """Indexed densities with prior weights over a shared base measure.

    Treat instances as immutable after construction; the per-metric distance
    memo is the only internal mutable state and is invisible to callers.
    """

    def __init__(
        self,
        members: Sequence[Density],
        prior: Sequence[float],
        param: Sequence | None = None,
        metric_id: str | None = None,
    ):
        members = tuple(members)
        if not members:
            raise DomainError("family needs at least one member")
        prior_arr = np.asarray(prior, dtype=float)
        if len(prior_arr) != len(members):
            raise WeightError("prior length must match member count")
        if np.any(prior_arr < 0) or abs(float(prior_arr.sum()) - 1.0) > 1e-12:
            raise WeightError("prior weights must be >= 0 and sum to 1 within 1e-12")
        measure = members[0].measure
        for m in members[1:]:
            measure = measure.merge(m.measure)
        prior_arr.setflags(write=False)
        self.members = members
        self.prior = prior_arr
        self.param = tuple(param) if param is not None else None
        self.metric_id = metric_id
        self.measure: BaseMeasure = measure
        self._distance_memo: dict[tuple[int, int], np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.members)

    def log_prior(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.prior)

    def distances_to(
        self, center_index: int, metric_fn: Callable[[Density, Density], float]
    ) -> np.ndarray:
        """Member distances to one member, memoized per (center, metric)."""
        key = (int(center_index), id(metric_fn))
        if key not in self._distance_memo:
            center = self.members[center_index]
            d = np.array([float(metric_fn(m, center)) for m in self.members])
            if np.any(np.isnan(d)) or np.any(d < 0):
                raise MetricError("metric returned NaN or a negative distance")
            d.setflags(write=False)
            self._distance_memo[key] = d
        return self._distance_memo[key]


@dataclass(frozen=True)
class ProjectionResult:
    index: int
    kl_at_min: float
    runner_up_gap: float
    refined_param: float | None = None
    tie: bool = False


def kl_minimizer(
    f0: Density,
    family: FiniteFamily,
    tol: float = 1e-9,
    refine: Callable[[float], Density] | None = None,
    refine_passes: int = 2,
    refine_factor: int = 10,
) -> ProjectionResult:
    """Scan the family for the KL minimizer from f0.

    A gap below tol between the best and second-best member raises the tie
    flag (smallest index wins).  When ``refine`` maps a scalar parameter to
    a density and the family carries params, the scan is sharpened by
    ``refine_passes`` local grid passes at ``refine_factor`` x resolution.
    """
    values = np.array([kl(f0, m, tol=tol).value for m in family.members])
    finite = np.isfinite(values)
    if not finite.any():
        raise AllInfinite("no family member has finite KL divergence from f0")
    best = int(np.argmin(np.where(finite, values, math.inf)))
    best_kl = float(values[best])
    others = np.where(finite, values, math.inf).copy()
    others[best] = math.inf
    runner_up = float(others.min()) if len(values) > 1 else math.inf
    gap = runner_up - best_kl

    refined_param = None
    if refine is not None and family.param is not None:
        params = np.asarray(family.param, dtype=float)
        order = np.argsort(params)
        pos = int(np.where(order == best)[0][0])
        lo = params[order[max(pos - 1, 0)]]
        hi = params[order[min(pos + 1, len(params) - 1)]]
        center, best_local = float(params[best]), best_kl
        for _ in range(refine_passes):
            grid = np.linspace(lo, hi, 2 * refine_factor + 1)
            vals = [kl(f0, refine(float(p)), tol=tol).value for p in grid]
            j = int(np.argmin(vals))
            if vals[j] < best_local:
                best_local, center = float(vals[j]), float(grid[j])
            lo = grid[max(j - 1, 0)]
            hi = grid[min(j + 1, len(grid) - 1)]
        refined_param = center
        best_kl = min(best_kl, best_local)

    return ProjectionResult(
        index=best,
        kl_at_min=best_kl,
        runner_up_gap=gap,
        refined_param=refined_param,
        tie=bool(gap < tol),
    )


def kl_profile(f0: Density, family: FiniteFamily, tol: float = 1e-9) -> list[tuple[float, float]]:
    """Full (param, KL) scan, sorted by param, for diagnostics and plots."""
    params = family.param if family.param is not None else tuple(range(len(family)))
    rows = [
        (float(p), kl(f0, m, tol=tol).value)
        for p, m in zip(params, family.members)
    ]
    rows.sort(key=lambda t: t[0])
    return rows
