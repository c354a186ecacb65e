"""Acceptance suite: one test per release criterion, at its stated tolerance.

Each test prints a single PASS/FAIL line with the measured quantities, so a
plain ``pytest -s tests/test_acceptance.py`` doubles as the acceptance
report.  Tolerances and budgets are pinned here, not configurable.
"""

import math
import time

import numpy as np
import pytest

from misspeclab import finite
from misspeclab.checkers import check_implications, minimax_gap
from misspeclab.divergences import l1_metric, weighted_l1_metric
from misspeclab.inid import Design, check_assumptions_CDE, inid_run, per_member_decay
from misspeclab.measures import BaseMeasure, catalog, integrate, make_ald
from misspeclab.posterior import RegionQuery, run_trajectory
from misspeclab.projection import FiniteFamily
from misspeclab.scenarios import (
    ald_ratio_bound_test,
    example1_report,
    example2_kept_sum_recurrence,
    example2_log_kept_sum,
    example2_lower_bound,
    example2_simulate,
)


def _report(criterion: str, ok: bool, detail: str, elapsed: float, budget: float):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {criterion}] {status} ({elapsed:.2f}s/{budget:.0f}s) {detail}")
    assert ok, f"criterion {criterion}: {detail}"
    assert elapsed < budget, f"criterion {criterion} exceeded runtime budget"


def test_criterion_01_example1_report():
    t0 = time.time()
    bs = [0.5 - 1.0 / k for k in range(3, 51)]
    rep = example1_report(bs)
    kls = rep.column("kl")
    l1s = rep.column("l1_mu")
    max_err = max(abs(k - (-math.log(b))) for b, k in zip(bs, kls))
    decreasing = all(a > b for a, b in zip(kls, kls[1:]))
    above = all(v > 0.25 for v in l1s)
    toward_log2 = kls[-1] - math.log(2.0)
    ok = max_err <= 1e-8 and decreasing and above and toward_log2 > 0
    _report(
        "1",
        ok,
        f"max |kl - (-log b)| = {max_err:.2e}, decreasing={decreasing}, "
        f"L1 > 1/4 everywhere={above}, final gap to log2 = {toward_log2:.4f}",
        time.time() - t0,
        5.0,
    )


def test_criterion_02_example2_exact_bound():
    import mpmath

    t0 = time.time()
    mpmath.mp.dps = 50
    oracle = float(
        mpmath.nsum(
            lambda k: (mpmath.mpf(1) / 2 - 1 / mpmath.mpf(k)) * mpmath.mpf(2) ** -(k - 1),
            [3, mpmath.inf],
        )
        / (mpmath.mpf(2) ** -2 * mpmath.mpf("0.1"))
    )
    st = example2_lower_bound(1, math.log(0.1))
    a1_ok = abs(st.A_n - oracle) <= 0.01 and abs(st.A_n - 4.55) <= 0.01
    k_max = 1024
    rec = example2_kept_sum_recurrence(200, k_max)
    rel = max(
        abs(math.exp(rec[n - 1] - example2_log_kept_sum(n, k_max)) - 1.0)
        for n in range(1, 201)
    )
    ok = a1_ok and rel <= 1e-10
    _report(
        "2",
        ok,
        f"A_1(0.81) = {st.A_n:.4f} (oracle {oracle:.4f}), "
        f"max recurrence/direct rel diff over n<=200 = {rel:.2e}",
        time.time() - t0,
        1.0,
    )


def test_criterion_03_example2_simulation():
    t0 = time.time()
    rep = example2_simulate(n_max=40, replications=100, seed=7)
    finals = [r for r in rep.rows if r[1] == 40]
    n_bound = sum(1 for r in finals if r[2] >= 0.99)
    n_event = sum(1 for r in finals if 0 < r[5] <= 10)  # event holds on [10, 40]
    ok = n_bound >= 95 and n_event >= 95
    _report(
        "3",
        ok,
        f"lower bound >= 0.99 at n=40 in {n_bound}/100; "
        f"tail event holds on all of [10,40] in {n_event}/100",
        time.time() - t0,
        30.0,
    )


def test_criterion_04_well_specified_sanity():
    t0 = time.time()
    cs = [round(1.0 + 0.1 * i, 10) for i in range(11)]
    members = [catalog("unif", lo=0.0, hi=c) for c in cs]
    family = FiniteFamily(members, np.full(len(cs), 1.0 / len(cs)), param=cs)
    f0 = catalog("unif", lo=0.0, hi=1.0)
    metric = l1_metric()
    q = RegionQuery(kind="metric_ball_complement", query_id="not_c1", eps=0.05,
                    metric=metric)
    hits = 0
    for seed in range(100):
        rep = run_trajectory(f0, family, 0, [q], n_max=200, seed=seed,
                             record_every=200)
        final_mass = rep.filtered(query_id="not_c1")[-1][2]
        if 1.0 - final_mass >= 0.99:
            hits += 1
    ok = hits >= 95
    _report(
        "4",
        ok,
        f"posterior mass at c=1 reaches >= 0.99 by n=200 in {hits}/100 seeds",
        time.time() - t0,
        30.0,
    )


def test_criterion_05_misspecified_concentration():
    t0 = time.time()
    bs = [0.5 - 1.0 / k for k in range(3, 31)]
    members = [catalog("example1_fk", b=b) for b in bs] + [catalog("example1_fstar")]
    family = FiniteFamily(members, np.full(len(members), 1.0 / len(members)))
    f0 = catalog("unif", lo=0.0, hi=1.0)
    fstar = members[-1]
    q = RegionQuery(
        kind="metric_ball_complement",
        query_id="far_mu0",
        eps=0.1,
        metric=weighted_l1_metric(f0, fstar),
    )
    hits = 0
    worst = 0.0
    for seed in range(100):
        rep = run_trajectory(f0, family, len(members) - 1, [q], n_max=500,
                             seed=seed, record_every=500)
        mass = rep.filtered(query_id="far_mu0")[-1][2]
        worst = max(worst, mass)
        if mass <= 0.05:
            hits += 1
    ok = hits >= 90
    _report(
        "5",
        ok,
        f"far-set mass <= 0.05 by n=500 in {hits}/100 seeds (worst {worst:.2e})",
        time.time() - t0,
        60.0,
    )


def test_criterion_06_affinity_property_suite():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    holder_ok = convex_ok = concave_ok = limit_ok = True
    for _ in range(20):
        n_pts = int(rng.integers(3, 7))
        f0, fstar, members = finite.random_instance(rng, n_pts, ratio_bound=3.0,
                                                    n_members=2)
        f1, f2 = members
        # Holder step over alpha pairs
        for a_hi in (0.2, 0.5, 0.9, 1.0):
            for a_lo in (0.05, 0.4, 0.8):
                if a_lo >= a_hi:
                    continue
                h_lo = finite.h_alpha(f0, fstar, f1, a_lo)
                h_hi = finite.h_alpha(f0, fstar, f1, a_hi)
                holder_ok &= h_lo <= h_hi ** (a_lo / a_hi) + 1e-10
        # convexity in alpha (midpoints) and concavity in f
        for a, b in ((0.0, 1.0), (0.1, 0.7), (0.3, 0.9)):
            mid = finite.h_alpha(f0, fstar, f1, 0.5 * (a + b))
            avg = 0.5 * (finite.h_alpha(f0, fstar, f1, a) + finite.h_alpha(f0, fstar, f1, b))
            convex_ok &= mid <= avg + 1e-10
        for lam in (0.25, 0.5, 0.75):
            mix = lam * f1 + (1 - lam) * f2
            h_mix = finite.h_alpha(f0, fstar, mix, 0.6)
            h_avg = lam * finite.h_alpha(f0, fstar, f1, 0.6) + (1 - lam) * finite.h_alpha(
                f0, fstar, f2, 0.6
            )
            concave_ok &= h_mix >= h_avg - 1e-10
        # monotone limit toward the KL excess
        ks = finite.kstar_vec(f0, fstar, f1)
        slopes = [(1.0 - finite.h_alpha(f0, fstar, f1, a)) / a for a in (1.0, 0.5, 0.1, 0.01, 1e-3)]
        limit_ok &= all(s2 >= s1 - 1e-10 for s1, s2 in zip(slopes, slopes[1:]))
        limit_ok &= abs(slopes[-1] - ks) <= 1e-2
    ok = holder_ok and convex_ok and concave_ok and limit_ok
    _report(
        "6",
        ok,
        f"holder={holder_ok} alpha-convexity={convex_ok} f-concavity={concave_ok} "
        f"monotone-limit={limit_ok} on 20 instances",
        time.time() - t0,
        10.0,
    )


def test_criterion_07_minimax_gaps():
    t0 = time.time()
    rng = np.random.default_rng(77)
    worst_h = worst_g = 0.0
    for _ in range(20):
        f0, fstar, G = finite.random_instance(rng, 4, ratio_bound=4.0, n_members=3)
        res_h = minimax_gap(G, f0, fstar, f_grid_refine=120, target=1e-3)
        res_g = minimax_gap(G, f0, fstar, objective="normalized", f_grid_refine=120,
                            target=1e-3)
        worst_h = max(worst_h, res_h.gap)
        worst_g = max(worst_g, res_g.gap)
    ok = worst_h <= 1e-3 and worst_g <= 1e-3
    _report(
        "7",
        ok,
        f"worst affinity gap {worst_h:.2e}, worst normalized gap {worst_g:.2e} "
        "over 20 hulls",
        time.time() - t0,
        60.0,
    )


def test_criterion_08_product_bound():
    t0 = time.time()
    rng = np.random.default_rng(88)
    checked = 0
    ok = True
    detail_worst = 0.0
    while checked < 10:
        f0, fstar, G = finite.random_instance(rng, 4, ratio_bound=4.0, n_members=3)
        alpha = float(rng.uniform(0.2, 0.8))
        sup_h, _ = finite.sup_hull_affinity(f0, fstar, G, alpha, resolution=300)
        if sup_h >= 0.98:
            continue  # hull not separated enough to certify a delta
        delta = -math.log(sup_h * (1.0 + 1e-9))
        W = finite.barycentric_grid(3, 5)
        for _ in range(3):
            nu = W[rng.integers(0, len(W))]
            for n in range(1, 5):
                val = finite.product_mixture_affinity(f0, fstar, G, nu, alpha, n)
                bound = math.exp(-n * delta) * (1.0 + 1e-10)
                detail_worst = max(detail_worst, val / bound)
                ok &= val <= bound
        checked += 1
    _report(
        "8",
        ok,
        f"10 certified hulls, n=1..4 mixtures: worst value/bound ratio "
        f"{detail_worst:.12f}",
        time.time() - t0,
        30.0,
    )


def test_criterion_09_convex_family_inequalities():
    t0 = time.time()
    rng = np.random.default_rng(99)
    ok = True
    worst_ratio = -math.inf
    worst_l1_slack = -math.inf
    for inst in range(20):
        if inst % 4 == 0:
            # truth inside the hull: the projection is the truth itself
            _, _, G = finite.random_instance(rng, 5, ratio_bound=4.0, n_members=3)
            w = rng.dirichlet(np.ones(3))
            f0 = w @ G
            fstar = f0
        else:
            f0, _, G = finite.random_instance(rng, 5, ratio_bound=4.0, n_members=3)
            w, residual = finite.em_kl_weights(f0, G, kkt_tol=1e-12)
            if residual > 1e-11:
                continue
            fstar = w @ G
        # grid family (the hull discretization plus the projection point);
        # the projection must be the family's grid-KL minimizer
        hull = np.vstack([finite.hull_points(G, 20), fstar])
        kls = np.array([finite.kl_vec(f0, f) for f in hull])
        assert kls.min() >= finite.kl_vec(f0, fstar) - 1e-12
        for f in hull:
            ratio = finite.h_alpha(f0, fstar, f, 1.0)
            worst_ratio = max(worst_ratio, ratio)
            ok &= ratio <= 1.0 + 1e-10
            ks = max(finite.kstar_vec(f0, fstar, f), 0.0)
            slack = finite.l1_mu0_vec(f0, fstar, fstar, f) - 2.0 * math.sqrt(ks)
            worst_l1_slack = max(worst_l1_slack, slack)
            ok &= slack <= 1e-8
    _report(
        "9",
        ok,
        f"20 hulls: max E0(f/f*) = {worst_ratio:.12f}, "
        f"max L1(mu0) - 2 sqrt(K*) = {worst_l1_slack:.2e}",
        time.time() - t0,
        10.0,
    )


def test_criterion_10_ald_invariants():
    t0 = time.time()
    cdf_ok = True
    worst_cdf = 0.0
    for tau in np.arange(0.1, 0.91, 0.1):
        d = make_ald(float(tau))
        below = BaseMeasure(pieces=((-math.inf, 0.0),))
        value, _ = integrate(lambda z: float(np.exp(d.log_pdf(z))), below, tol=1e-11)
        worst_cdf = max(worst_cdf, abs(value - tau))
        cdf_ok &= abs(value - tau) <= 1e-10
    rng = np.random.default_rng(10)
    slack_ok = True
    worst_slack = -math.inf
    x = rng.uniform(0.0, 1.0, 10_000)
    y = rng.normal(size=10_000) + 0.3 + 0.4 * x
    for _ in range(10):
        t1 = tuple(rng.uniform(-1.0, 1.0, size=2))
        t2 = tuple(rng.uniform(-1.0, 1.0, size=2))
        tau = float(rng.uniform(0.1, 0.9))
        slack = ald_ratio_bound_test(tau, t1, t2, (x, y))
        worst_slack = max(worst_slack, slack)
        slack_ok &= slack <= 0.0
    ok = cdf_ok and slack_ok
    _report(
        "10",
        ok,
        f"max |CDF(0) - tau| = {worst_cdf:.2e}; max ratio-bound slack = {worst_slack:.2e}",
        time.time() - t0,
        10.0,
    )


def test_criterion_11_inid_theorem_desk_scale():
    t0 = time.time()
    from misspeclab.inid import FunctionClass, InidScenario

    fclass = FunctionClass.from_coefficient_grid(
        coef_values=[(0.0, 0.3, 0.6), (-0.6, 0.4, 1.4), (-1.5, 0.0, 1.5)],
        bound=4.0,
    )
    star = [tuple(c) for c in fclass.coeffs.tolist()].index((0.3, 0.4, 0.0))
    scenario = InidScenario(
        fclass=fclass,
        prior=np.full(len(fclass), 1.0 / len(fclass)),
        theta_star_index=star,
        p0=catalog("normal", mu=0.0, sigma=1.0),
        tau=0.5,
    )
    design = Design.equispaced_cycle(256, 2000)
    witnesses = check_assumptions_CDE(scenario, eps=0.1, x_probes=5, t_probes=3)
    cde_ok = all(w.holds for w in witnesses)
    rep = inid_run(scenario, design, n_max=2000, eps=0.1, replications=20, seed=7,
                   record_every=2000)
    finals = [r for r in rep.rows if r[0] == 2000]
    hits = sum(1 for r in finals if r[2] <= 0.05)
    kappa_ok = rep.config["kappa_hat"] > 0.0
    decay = per_member_decay(scenario, design, n=2000, eps=0.1)
    decay_ok = len(decay) > 0 and all(r["ok"] for r in decay)
    ok = cde_ok and hits >= 18 and kappa_ok and decay_ok
    _report(
        "11",
        ok,
        f"C/D/E hold={cde_ok}; far mass <= 0.05 at n=2000 in {hits}/20 seeds; "
        f"kappa_hat = {rep.config['kappa_hat']:.4f} > 0; per-member decay ok for "
        f"{sum(r['ok'] for r in decay)}/{len(decay)} far members",
        time.time() - t0,
        300.0,
    )


def test_criterion_12_checker_soundness():
    t0 = time.time()
    rng = np.random.default_rng(12)
    sound_all = True
    nonvacuous = 0
    for _ in range(50):
        n_pts = int(rng.integers(3, 7))
        n_members = int(rng.integers(1, 5))
        f0, fstar, F = finite.random_instance(rng, n_pts, ratio_bound=4.0,
                                              n_members=n_members)
        F = np.atleast_2d(F)
        rep = check_implications(
            F,
            f0,
            fstar,
            eps=float(rng.uniform(0.001, 0.2)),
            delta=float(rng.uniform(0.001, 0.2)),
            eta=float(rng.uniform(0.001, 0.2)),
            alpha0=float(rng.uniform(0.05, 0.95)),
        )
        sound_all &= rep.sound
        if rep.cond_iii or rep.cond_ii:
            nonvacuous += 1
    ok = sound_all and nonvacuous >= 5
    _report(
        "12",
        ok,
        f"implication chain sound on 50 randomized instances "
        f"({nonvacuous} with active antecedents)",
        time.time() - t0,
        30.0,
    )
