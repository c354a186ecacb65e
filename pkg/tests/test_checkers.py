"""Assumption checkers, minimax identities, and the enumeration-based bounds."""

import itertools
import math

import numpy as np
import pytest

from misspeclab import finite
from misspeclab.checkers import (
    SieveSpec,
    check_assumption1,
    check_assumption2c,
    check_assumption4,
    check_implications,
    check_sieve,
    check_sufficient_2c,
    covering_numbers,
    minimax_gap,
    witness_to_json,
)
from misspeclab.divergences import l1_metric, weighted_l1_metric
from misspeclab.errors import CoverageGap
from misspeclab.measures import Density, catalog
from misspeclab.projection import FiniteFamily


def _unif_grid_family():
    cs = [round(1.0 + 0.1 * i, 10) for i in range(11)]
    members = [catalog("unif", lo=0.0, hi=c) for c in cs]
    return FiniteFamily(members, np.full(len(cs), 1.0 / len(cs)), param=cs), 0


def _example1_family(k_hi=12):
    bs = [0.5 - 1.0 / k for k in range(3, k_hi)]
    members = [catalog("example1_fk", b=b) for b in bs] + [catalog("example1_fstar")]
    prior = np.full(len(members), 1.0 / len(members))
    return FiniteFamily(members, prior), len(members) - 1


@pytest.fixture(scope="module")
def f0():
    return catalog("unif", lo=0.0, hi=1.0)


class TestAssumption1:
    def test_unif_grid_mass_at_005(self, f0):
        # oracle: only c = 1.0 has K* = log(c) < 0.05, so mass = 1/11
        fam, star = _unif_grid_family()
        w = check_assumption1(fam, f0, star, eps_grid=[0.05])
        assert w.holds
        assert dict(w.certificate["eps_mass"])[0.05] == pytest.approx(1.0 / 11.0, abs=1e-12)

    def test_baseline_atom_holds_everywhere(self, f0):
        fam, star = _unif_grid_family()
        w = check_assumption1(fam, f0, star, eps_grid=[1e-6, 1e-3, 0.1, 1.0])
        assert w.holds

    def test_example1_holds(self, f0):
        # K*(f0, f_b) = -log(2b) drops to 0 along the b sequence
        fam, star = _example1_family()
        w = check_assumption1(fam, f0, star, eps_grid=[0.01, 0.05, 0.5])
        assert w.holds

    def test_fails_when_neighborhood_has_no_prior(self, f0):
        # the baseline member carries zero prior and every other member has
        # K* = log 2 or more, so the 0.05-neighborhood has prior mass zero
        bs = [0.1, 0.2]
        members = [catalog("example1_fk", b=b) for b in bs]
        fam = FiniteFamily(members, [1.0, 0.0])
        w = check_assumption1(fam, f0, 1, eps_grid=[0.05])
        assert not w.holds and w.verdict == "fails"
        assert w.epsilon == 0.05


class TestAssumption2c:
    def test_singleton_family(self, f0):
        fam = FiniteFamily([catalog("example1_fstar")], [1.0])
        w = check_assumption2c(fam, f0, 0, eps=0.1, metric_fn=l1_metric())
        assert w.holds

    def test_example1_discretization_holds(self, f0):
        fam, star = _example1_family()
        fstar = fam.members[star]
        w = check_assumption2c(
            fam, f0, star, eps=0.2, metric_fn=weighted_l1_metric(f0, fstar)
        )
        assert w.holds
        assert w.alpha0 is not None and w.delta is not None

    def test_adversarial_far_member_fails(self, f0):
        """A member far in the metric but with affinity pinned at 1 defeats
        every (alpha0, delta) pair."""
        fstar = catalog("example1_fstar")
        # same values as the baseline on (0,1) (so h = 1 under f0) but far away
        # in plain L1 thanks to different mass placement on (1,2)
        half = catalog("example2_ga", a=1.0)

        def adversary_log_pdf(y):
            y = np.asarray(y, dtype=float)
            out = np.where((y >= 0.0) & (y <= 1.0), math.log(0.5), -math.inf)
            out = np.where((y >= 1.0) & (y <= 1.25), math.log(2.0), out)
            return out

        adversary = Density(
            measure=fstar.measure,
            log_pdf=adversary_log_pdf,
            support=half.support,
            label="adversary",
            breakpoints=(0.0, 1.0, 1.25, 2.0),
        )
        fam = FiniteFamily([fstar, adversary], [0.5, 0.5])
        w = check_assumption2c(fam, f0, 0, eps=0.2, metric_fn=l1_metric())
        assert w.verdict == "fails"
        assert w.witness == 1


class TestSufficient2c:
    def test_example1_family(self, f0):
        # oracle: sup (2b)^alpha <= 1 and sup (2b)^2 <= 1
        fam, star = _example1_family()
        w = check_sufficient_2c(fam, f0, star, alpha0=0.5)
        assert w.holds
        assert w.certificate["sup_h_alpha0"] <= 1.0 + 1e-8
        assert w.certificate["sup_second_moment"] <= 1.0 + 1e-8
        assert w.certificate["sup_abs_log_ratio"] < math.inf

    def test_support_mismatch_flagged(self, f0):
        members = [catalog("example2_ga", a=1.0), catalog("example2_ga", a=0.5)]
        fam = FiniteFamily(members, [0.5, 0.5])
        w = check_sufficient_2c(fam, f0, 0, alpha0=0.5)
        assert 1 in w.certificate["support_mismatch_members"]
        # second moment of the truncated member is finite even so
        assert math.isfinite(w.certificate["sup_second_moment"])


class TestAssumption4:
    def test_weighted_l1_is_identity_modulus(self, f0):
        fstar = catalog("example1_fstar")
        bs = [0.30, 0.35, 0.40, 0.45, 0.48]
        members = [catalog("example1_fk", b=b) for b in bs]
        pairs = list(itertools.combinations(members + [fstar], 2))
        est = check_assumption4(pairs, f0, fstar, weighted_l1_metric(f0, fstar))
        assert est.max_violation <= 1e-7
        assert est.verdict == "holds"
        assert est.fitted_slope == pytest.approx(1.0, abs=1e-6)

    def test_identical_pair_zero(self, f0):
        fstar = catalog("example1_fstar")
        est = check_assumption4([(fstar, fstar)], f0, fstar, l1_metric())
        assert est.left_sides[0] == 0.0

    def test_envelope_is_monotone(self, f0):
        fstar = catalog("example1_fstar")
        bs = [0.25, 0.3, 0.45]
        pairs = list(itertools.combinations([catalog("example1_fk", b=b) for b in bs], 2))
        est = check_assumption4(pairs, f0, fstar, l1_metric())
        xs = np.linspace(0, max(est.distances), 17)
        vals = [est.eta(x) for x in xs]
        assert all(v2 >= v1 for v1, v2 in zip(vals, vals[1:]))
        assert est.eta(0.0) == 0.0


class TestMinimax:
    def test_singleton_hull(self):
        rng = np.random.default_rng(5)
        f0, fstar, f = finite.random_instance(rng, 4)
        res = minimax_gap(f[None, :], f0, fstar, f_grid_refine=1)
        assert res.lhs == pytest.approx(res.rhs, abs=1e-12)

    def test_random_hulls_close_gap(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            f0, fstar, G = finite.random_instance(rng, 4, n_members=3)
            res = minimax_gap(G, f0, fstar, f_grid_refine=120)
            assert res.gap <= 1e-3
            assert res.lhs >= res.rhs - 1e-12  # weak duality on the grid

    def test_normalized_variant(self):
        rng = np.random.default_rng(11)
        for _ in range(3):
            f0, fstar, G = finite.random_instance(rng, 4, n_members=3)
            res = minimax_gap(G, f0, fstar, objective="normalized", f_grid_refine=120)
            assert res.gap <= 1e-3


class TestImplications:
    def test_forward_chain(self):
        """(iii) with eta implies (ii) with delta = eta implies inf K* >= delta."""
        rng = np.random.default_rng(23)
        for _ in range(10):
            f0, fstar, F = finite.random_instance(rng, 5, n_members=4)
            rep = check_implications(
                F, f0, fstar, eps=0.01, delta=0.05, eta=0.05, alpha0=0.5
            )
            assert rep.sound

    def test_failing_i_blocks_ii_and_iii(self):
        """A family containing (nearly) the baseline cannot satisfy (ii) or (iii)."""
        rng = np.random.default_rng(29)
        f0, fstar, F = finite.random_instance(rng, 5, n_members=3)
        F = np.vstack([F, fstar])  # inf K* = 0
        rep = check_implications(F, f0, fstar, eps=0.01, delta=0.01, eta=0.01, alpha0=0.5)
        assert not rep.cond_i
        assert not rep.cond_ii and not rep.cond_iii

    def test_convex_hull_witness_search(self):
        """On a separated hull, (i) forces a dyadic (alpha0, eta) witness for (iii)."""
        f0 = np.array([0.5, 0.3, 0.15, 0.05])
        fstar = np.array([0.45, 0.3, 0.15, 0.10])
        g1 = np.array([0.05, 0.15, 0.40, 0.40])
        g2 = np.array([0.10, 0.10, 0.30, 0.50])
        g3 = np.array([0.02, 0.28, 0.45, 0.25])
        rep = check_implications(
            np.stack([g1, g2, g3]), f0, fstar, eps=0.05, delta=0.05, eta=0.05,
            alpha0=0.5, convex_hull=True,
        )
        assert rep.cond_i
        assert rep.convex_witness is not None
        a0, eta = rep.convex_witness
        h = finite.h_alpha_matrix(f0, fstar, finite.hull_points(np.stack([g1, g2, g3]), 60), [a0])[0]
        assert h.max() < math.exp(-eta) + 1e-12


class TestCovering:
    def test_member_count_bound(self, f0):
        fam, star = _example1_family(k_hi=8)
        rep = covering_numbers(fam, star, l1_metric(), eps=0.1)
        for shell in rep.shells:
            assert shell.n_balls <= len(fam)
            assert shell.n_balls <= max(1, len(shell.member_indices))

    def test_all_inside_ball_empty_shells(self, f0):
        fam = FiniteFamily([catalog("example1_fstar")], [1.0])
        rep = covering_numbers(fam, 0, l1_metric(), eps=0.5)
        assert all(s.n_balls == 0 for s in rep.shells)

    def test_unif_grid_shell_occupancy_closed_form(self, f0):
        """L1 distance between unif(0,c) and unif(0,2) is 2 - c; shell
        occupancy must match the closed form.  eps = 0.093 keeps every
        distance well away from a shell boundary."""
        fam, _ = _unif_grid_family()
        star = len(fam) - 1  # center at c = 2.0
        cs = np.array(fam.param)
        expected_d = 2.0 - cs
        eps = 0.093
        rep = covering_numbers(fam, star, l1_metric(), eps=eps)
        occupancy = {s.j: len(s.member_indices) for s in rep.shells}
        for j in range(1, int(expected_d.max() / eps) + 1):
            want = int(np.sum((expected_d >= j * eps) & (expected_d < (j + 1) * eps)))
            assert occupancy.get(j, 0) == want
        # every shell member within j*eps/3 of a center
        for s in rep.shells:
            for i in s.member_indices:
                dmin = min(
                    l1_metric()(fam.members[i], fam.members[c]) for c in s.centers
                )
                assert dmin <= s.j * eps / 3.0 + 1e-12


class TestSieve:
    def test_trivial_finite_sieve(self, f0):
        fam, star = _unif_grid_family()
        spec = SieveSpec(v_n=lambda n, i: True, w_n=lambda n, i: False, delta=2.0,
                         j_coeff=(len(fam), 0.0))
        w = check_sieve(spec, fam, f0, star)
        assert w.holds

    def test_tail_decay_condition(self, f0):
        # W_n = tail members with prior mass ~ 2^{-n c}: holds iff c log 2 > delta
        fam, star = _example1_family()
        n_members = len(fam)

        def w_n(n, i):
            return i < max(0, n_members - 1 - n)  # shrinking tail of step members

        spec_ok = SieveSpec(v_n=lambda n, i: not w_n(n, i), w_n=w_n, delta=1.5,
                            j_coeff=(n_members, 0.0))
        w = check_sieve(spec_ok, fam, f0, star, n_values=(50, 100, 200))
        assert w.holds  # prior masses are 0 beyond small n (tail empties)

    def test_coverage_gap(self, f0):
        fam, star = _unif_grid_family()
        spec = SieveSpec(v_n=lambda n, i: i > 0, w_n=lambda n, i: False, delta=2.0,
                         j_coeff=(len(fam), 0.0))
        with pytest.raises(CoverageGap):
            check_sieve(spec, fam, f0, star)

    def test_delta_must_clear_twice_kl(self, f0):
        fam, star = _example1_family()
        spec = SieveSpec(v_n=lambda n, i: True, w_n=lambda n, i: False,
                         delta=0.1, j_coeff=(len(fam), 0.0))
        w = check_sieve(spec, fam, f0, star)
        # 2 E0 log(f0/f*) = 2 log 2 > 0.1, so the delta condition fails
        assert not w.holds


class TestWitnessSerialization:
    def test_json_round_trip_fields(self, f0):
        import json

        fam, star = _unif_grid_family()
        w = check_assumption1(fam, f0, star, eps_grid=[0.05])
        payload = json.loads(witness_to_json(w))
        assert payload["assumption_id"] == "A1"
        assert payload["verdict"] == "holds"


# ---------------------------------------------------------------------------
# Enumeration-based bounds (lemma and propositions exercised as properties)
# ---------------------------------------------------------------------------


class TestNonnegativeSumBound:
    """P(sum T_i > e^-eps) <= e^eps * sum_i inf_alpha E T_i^alpha, checked by
    exhaustive enumeration on finite spaces with k <= 3 variables."""

    @pytest.mark.parametrize("seed", range(8))
    def test_bound_holds(self, seed):
        rng = np.random.default_rng(seed)
        n_pts = int(rng.integers(3, 7))
        p = rng.dirichlet(np.ones(n_pts))
        k = int(rng.integers(1, 4))
        T = rng.uniform(0.0, 2.5, size=(k, n_pts))
        T[rng.uniform(size=T.shape) < 0.2] = 0.0  # some exact zeros
        eps = float(rng.uniform(0.05, 1.5))
        total = T.sum(axis=0)
        lhs = float(p[total > math.exp(-eps)].sum())
        alphas = np.linspace(1e-6, 1.0, 2001)
        rhs = 0.0
        for i in range(k):
            moments = np.array([float(np.sum(p * T[i] ** a)) for a in alphas])
            rhs += float(moments.min())
        assert lhs <= math.exp(eps) * rhs + 1e-12


class TestProductBound:
    """sup_f h_alpha <= e^-delta on a hull forces h_alpha of the n-sample
    mixture below e^{-n delta}, verified by exact enumeration for n = 1..4."""

    def _certified_instance(self, seed):
        rng = np.random.default_rng(seed)
        while True:
            f0, fstar, G = finite.random_instance(rng, 4, ratio_bound=4.0, n_members=3)
            alpha = float(rng.uniform(0.2, 0.8))
            sup_h, _ = finite.sup_hull_affinity(f0, fstar, G, alpha, resolution=300)
            if sup_h < 0.98:
                delta = -math.log(sup_h * (1.0 + 1e-9))
                return f0, fstar, G, alpha, delta, rng

    @pytest.mark.parametrize("seed", range(4))
    def test_exact_product_enumeration(self, seed):
        f0, fstar, G, alpha, delta, rng = self._certified_instance(seed)
        W = finite.barycentric_grid(3, 6)
        for _ in range(3):
            nu = W[rng.integers(0, len(W))]
            for n in range(1, 5):
                val = finite.product_mixture_affinity(f0, fstar, G, nu, alpha, n)
                assert val <= math.exp(-n * delta) * (1.0 + 1e-10)


class TestConvexFamilyInequalities:
    """On a hull with its exact KL projection: E0(f/f*) <= 1 and the
    weighted-L1 distance is at most 2 sqrt(K*)."""

    def _hull_with_projection(self, seed):
        rng = np.random.default_rng(seed)
        f0, _, G = finite.random_instance(rng, 5, ratio_bound=4.0, n_members=3)
        w, residual = finite.em_kl_weights(f0, G, kkt_tol=1e-12)
        assert residual <= 1e-11
        fstar = w @ G
        return f0, fstar, G

    @pytest.mark.parametrize("seed", range(6))
    def test_inequalities_on_grid(self, seed):
        f0, fstar, G = self._hull_with_projection(seed)
        hull = finite.hull_points(G, 25)
        for f in hull:
            e0_ratio = finite.h_alpha(f0, fstar, f, 1.0)
            assert e0_ratio <= 1.0 + 1e-10
            ks = finite.kstar_vec(f0, fstar, f)
            assert ks >= -1e-12
            lhs = finite.l1_mu0_vec(f0, fstar, fstar, f)
            assert lhs <= 2.0 * math.sqrt(max(ks, 0.0)) + 1e-8

    def test_well_specified_hull(self):
        rng = np.random.default_rng(99)
        _, _, G = finite.random_instance(rng, 5, n_members=3)
        w = np.array([0.2, 0.5, 0.3])
        f0 = w @ G  # truth inside the hull: the projection is f0 itself
        hull = finite.hull_points(G, 20)
        for f in hull:
            assert finite.h_alpha(f0, f0, f, 1.0) <= 1.0 + 1e-12
            lhs = finite.l1_mu0_vec(f0, f0, f0, f)
            ks = finite.kstar_vec(f0, f0, f)
            assert lhs <= 2.0 * math.sqrt(max(ks, 0.0)) + 1e-8


class TestStrengthened2c:
    def test_delta_pinned_to_eps_squared(self, f0):
        fam, star = _example1_family()
        fstar = fam.members[star]
        eps = 0.2
        w = check_assumption2c(
            fam, f0, star, eps=eps, metric_fn=weighted_l1_metric(f0, fstar),
            strengthened=True,
        )
        if w.holds:
            assert w.delta == pytest.approx(eps**2, abs=1e-15)
        else:
            assert w.verdict in ("fails", "inconclusive")
