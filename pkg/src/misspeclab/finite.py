"""Finite sample-space utilities.

Densities on a finite space are probability vectors; mixtures, products,
affinities, and optima over such spaces are exactly enumerable, which is
what makes the convexity-dependent claims checkable at desk scale.  The
heavy grid searches in the checkers run on these vectors.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import optimize as _sciopt

from .errors import DomainError, GridTooCoarse

__all__ = [
    "validate_pvec",
    "h_alpha",
    "h_alpha_matrix",
    "kl_vec",
    "kstar_vec",
    "l1_mu0_vec",
    "inf_alpha_vec",
    "barycentric_grid",
    "hull_points",
    "random_instance",
    "em_kl_weights",
    "sup_hull_affinity",
    "product_mixture_affinity",
]

_EPS = 1e-300


def validate_pvec(p, name: str = "p") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or not np.isfinite(p).all():
        raise DomainError(f"{name} must be a nonnegative finite vector")
    if abs(float(p.sum()) - 1.0) > 1e-9:
        raise DomainError(f"{name} must sum to 1, got {p.sum()!r}")
    return p


def h_alpha(f0, fstar, f, alpha: float) -> float:
    """Affinity sum(f0 * (f/f*)**alpha) with the endpoint conventions."""
    f0 = np.asarray(f0, float)
    fstar = np.asarray(fstar, float)
    f = np.asarray(f, float)
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("alpha must lie in [0,1]")
    if alpha == 0.0:
        return 1.0
    ratio = np.where(f0 > 0, f / np.maximum(fstar, _EPS), 0.0)
    if np.any((fstar <= 0) & (f0 > 0) & (f > 0)):
        return math.inf
    if alpha == 1.0:
        return float(np.sum(f0 * ratio))
    return float(np.sum(f0 * ratio**alpha))


def h_alpha_matrix(f0, fstar, F, alphas) -> np.ndarray:
    """Affinities for every member row of F at every alpha: shape (na, nf).

    Assumes fstar > 0 wherever f0 > 0 (checked), members nonnegative.
    """
    f0 = np.asarray(f0, float)
    fstar = np.asarray(fstar, float)
    F = np.atleast_2d(np.asarray(F, float))
    alphas = np.asarray(alphas, float)
    if np.any((fstar <= 0) & (f0 > 0)):
        raise DomainError("fstar must be positive wherever f0 is")
    mask = f0 > 0
    w = f0[mask]
    logr = np.log(np.maximum(F[:, mask], _EPS)) - np.log(fstar[mask])
    # (na, nf, ns) would be large; loop alphas, vectorize members
    out = np.empty((len(alphas), F.shape[0]))
    ratios = np.exp(logr)  # (nf, ns)
    for i, a in enumerate(alphas):
        if a == 0.0:
            out[i] = 1.0
        elif a == 1.0:
            out[i] = ratios @ w
        else:
            out[i] = np.exp(a * logr) @ w
    return out


def kl_vec(f0, f) -> float:
    """KL divergence sum(f0 log(f0/f)) with 0 log 0 = 0; +inf on support gaps."""
    f0 = np.asarray(f0, float)
    f = np.asarray(f, float)
    mask = f0 > 0
    if np.any(f[mask] <= 0):
        return math.inf
    return float(np.sum(f0[mask] * (np.log(f0[mask]) - np.log(f[mask]))))


def kstar_vec(f0, fstar, f) -> float:
    """KL excess sum(f0 log(f*/f)); +inf when f vanishes under f0-mass."""
    f0 = np.asarray(f0, float)
    fstar = np.asarray(fstar, float)
    f = np.asarray(f, float)
    mask = f0 > 0
    if np.any(f[mask] <= 0):
        return math.inf
    return float(np.sum(f0[mask] * (np.log(fstar[mask]) - np.log(f[mask]))))


def l1_mu0_vec(f0, fstar, f, g) -> float:
    """Weighted L1 distance sum(|f - g| * f0/f*) on a finite space."""
    f0 = np.asarray(f0, float)
    fstar = np.asarray(fstar, float)
    w = np.where(f0 > 0, f0 / np.maximum(fstar, _EPS), 0.0)
    return float(np.sum(np.abs(np.asarray(f, float) - np.asarray(g, float)) * w))


def inf_alpha_vec(f0, fstar, f, n_grid: int = 4097) -> tuple[float, float]:
    """Brute-force infimum of h_alpha over a dense alpha grid (oracle style)."""
    alphas = np.linspace(0.0, 1.0, n_grid)
    vals = h_alpha_matrix(f0, fstar, np.asarray(f, float)[None, :], alphas)[:, 0]
    i = int(np.argmin(vals))
    return float(alphas[i]), float(vals[i])


def barycentric_grid(n_generators: int, resolution: int) -> np.ndarray:
    """All weight vectors with coordinates k/resolution summing to 1."""
    if n_generators < 1 or resolution < 1:
        raise DomainError("need at least one generator and resolution >= 1")
    R, G = int(resolution), int(n_generators)
    if G == 1:
        return np.ones((1, 1))
    if G == 2:
        i = np.arange(R + 1, dtype=float)
        return np.stack([i, R - i], axis=1) / R
    if G == 3:
        i, j = np.meshgrid(np.arange(R + 1), np.arange(R + 1), indexing="ij")
        mask = i + j <= R
        counts = np.stack([i[mask], j[mask], R - i[mask] - j[mask]], axis=1)
        return counts.astype(float) / R
    # stars and bars for higher generator counts (small resolutions only)
    n_rows = math.comb(R + G - 1, G - 1)
    if n_rows > 2_000_000:
        raise DomainError("barycentric grid too large to enumerate")
    counts = np.empty((n_rows, G))
    for row, bars in enumerate(itertools.combinations(range(R + G - 1), G - 1)):
        edges = (-1, *bars, R + G - 1)
        counts[row] = [edges[k + 1] - edges[k] - 1 for k in range(G)]
    return counts / float(R)


def hull_points(generators, resolution: int) -> np.ndarray:
    """Barycentric-grid discretization of the convex hull of generator rows."""
    G = np.atleast_2d(np.asarray(generators, float))
    W = barycentric_grid(G.shape[0], resolution)
    return W @ G


def random_instance(rng, n_points: int, ratio_bound: float = 3.0, n_members: int = 1):
    """Random (f0, fstar, members) with bounded ratios f/f*.

    Members are f* tilted by log-uniform factors in [1/ratio_bound,
    ratio_bound] and renormalized, so the pointwise ratio stays within
    ratio_bound**2.  All vectors are strictly positive, keeping every
    divergence finite and the affinity curvature moderate (the
    monotone-limit checks rely on that).
    """
    if ratio_bound <= 1.0:
        raise DomainError("ratio_bound must exceed 1")
    f0 = rng.dirichlet(np.full(n_points, 2.0))
    f0 = 0.9 * f0 + 0.1 / n_points
    fstar = rng.dirichlet(np.full(n_points, 2.0))
    fstar = 0.9 * fstar + 0.1 / n_points
    members = []
    for _ in range(n_members):
        logr = rng.uniform(-math.log(ratio_bound), math.log(ratio_bound), size=n_points)
        raw = fstar * np.exp(logr)
        members.append(raw / raw.sum())
    members = np.array(members)
    return f0, fstar, members[0] if n_members == 1 else members


def em_kl_weights(
    f0, generators, max_iter: int = 500_000, kkt_tol: float = 1e-11
) -> tuple[np.ndarray, float]:
    """KL-projection weights of f0 onto the simplex of generator mixtures.

    Multiplicative updates w_g <- w_g * E0(f_g / f_w); the update is
    self-normalizing and monotone in KL.  Returns (weights, kkt_residual)
    where the residual is max_g E0(f_g/f_w) - 1; a residual <= kkt_tol
    certifies first-order optimality, hence E0(f/f_w) <= 1 + kkt_tol for
    every f in the hull.
    """
    f0 = validate_pvec(f0, "f0")
    G = np.atleast_2d(np.asarray(generators, float))
    w = np.full(G.shape[0], 1.0 / G.shape[0])
    mask = f0 > 0
    f0m = f0[mask]
    Gm = G[:, mask]
    residual = math.inf
    for _ in range(max_iter):
        mix = w @ Gm
        ratios = Gm @ (f0m / np.maximum(mix, _EPS))  # E0(f_g / f_w) per generator
        residual = float(ratios.max() - 1.0)
        if residual <= kkt_tol:
            break
        w = w * ratios
        w = w / w.sum()
    return w, residual


def sup_hull_affinity(f0, fstar, generators, alpha: float, resolution: int = 400):
    """Supremum of the concave map f -> h_alpha over the generator hull.

    Grid scan plus an SLSQP polish; for a smooth concave objective on a
    low-dimensional simplex the polished local maximum is the global one.
    Returns (sup_value, argmax_weights).
    """
    f0 = np.asarray(f0, float)
    fstar = np.asarray(fstar, float)
    G = np.atleast_2d(np.asarray(generators, float))
    W = barycentric_grid(G.shape[0], resolution)
    vals = h_alpha_matrix(f0, fstar, W @ G, [alpha])[0]
    w0 = W[int(np.argmax(vals))]

    def neg_h(w):
        w = np.maximum(w, 0.0)
        s = w.sum()
        if s <= 0:
            return 1.0
        return -h_alpha(f0, fstar, (w / s) @ G, alpha)

    cons = ({"type": "eq", "fun": lambda w: w.sum() - 1.0},)
    bounds = [(0.0, 1.0)] * G.shape[0]
    res = _sciopt.minimize(
        neg_h, w0, method="SLSQP", bounds=bounds, constraints=cons,
        options={"maxiter": 500, "ftol": 1e-15},
    )
    w_best = np.maximum(res.x, 0.0)
    w_best = w_best / w_best.sum()
    best = h_alpha(f0, fstar, w_best @ G, alpha)
    if vals.max() > best:
        best = float(vals.max())
        w_best = W[int(np.argmax(vals))]
    return float(best), w_best


def product_mixture_affinity(f0, fstar, generators, nu, alpha: float, n: int) -> float:
    """Exact n-sample affinity of the mixture-of-products against f*^n.

    Enumerates the product sample space and computes
    sum over tuples of  (sum_j nu_j prod_i f_j(y_i) / prod_i f*(y_i))**alpha
    * prod_i f0(y_i).  Feasible for small spaces and n <= ~6.
    """
    f0 = np.asarray(f0, float)
    fstar = np.asarray(fstar, float)
    G = np.atleast_2d(np.asarray(generators, float))
    nu = np.asarray(nu, float)
    if len(nu) != G.shape[0]:
        raise DomainError("mixture weight length must match generator count")
    s = G.shape[1]
    if s**n > 2_000_000:
        raise GridTooCoarse("product sample space too large to enumerate")
    # accumulate per-generator product tensors iteratively
    prod_g = np.ones((G.shape[0], 1))
    prod_star = np.ones(1)
    prod_0 = np.ones(1)
    for _ in range(n):
        prod_g = (prod_g[:, :, None] * G[:, None, :]).reshape(G.shape[0], -1)
        prod_star = (prod_star[:, None] * fstar[None, :]).ravel()
        prod_0 = (prod_0[:, None] * f0[None, :]).ravel()
    mix = nu @ prod_g
    mask = prod_0 > 0
    ratio = mix[mask] / np.maximum(prod_star[mask], _EPS)
    return float(np.sum(prod_0[mask] * ratio**alpha))
