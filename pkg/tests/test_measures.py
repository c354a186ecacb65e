"""Measure layer: quadrature, catalog densities, samplers."""

import math

import numpy as np
import pytest

from misspeclab.errors import DomainError, NonFinite, WeightError
from misspeclab.measures import (
    BaseMeasure,
    E2_LOWER_CDF,
    catalog,
    example2_measure,
    integrate,
    make_ald,
)

# analytic CDFs used as the independent check against the inverse-CDF samplers
def _unif_cdf(lo, hi):
    return lambda q: np.clip((q - lo) / (hi - lo), 0.0, 1.0)


def _ald_cdf(tau):
    def cdf(q):
        q = np.asarray(q, dtype=float)
        return np.where(q <= 0, tau * np.exp(q * (1 - tau)), 1 - (1 - tau) * np.exp(-q * tau))

    return cdf


def _example1_fk_cdf(b):
    def cdf(q):
        q = np.asarray(q, dtype=float)
        out = np.clip(q, 0, 1) * b
        out = np.where(q > 1, b + 2 * (1 - b) * (np.minimum(q, 1.5) - 1), out)
        return out

    return cdf


class TestIntegrate:
    def test_constant_over_unif_support(self):
        m = BaseMeasure(pieces=((0.0, 1.0),))
        value, err = integrate(lambda y: 1.0, m, tol=1e-12)
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_linear_over_lebesgue_0_2(self):
        m = BaseMeasure(pieces=((0.0, 2.0),))
        value, _ = integrate(lambda y: y, m, tol=1e-10)
        assert value == pytest.approx(2.0, abs=1e-10)

    def test_atoms_counted_exactly(self):
        # oracle: the atoms 3..10 each contribute exactly 1
        m = example2_measure(10)
        atoms_only = BaseMeasure(pieces=(), atoms=m.atoms)
        value, err = integrate(lambda y: 1.0, atoms_only, tol=1e-9)
        assert value == 8.0 and err == 0.0

    def test_atom_piece_partition_sums_exactly(self):
        m = example2_measure(6)
        g = lambda y: 1.0 / (1.0 + y)
        full, _ = integrate(g, m, tol=1e-9)
        pieces_only, _ = integrate(g, BaseMeasure(pieces=m.pieces), tol=1e-9)
        atoms_only, _ = integrate(g, BaseMeasure(atoms=m.atoms), tol=1e-9)
        assert full == pytest.approx(pieces_only + atoms_only, abs=0.0)

    def test_nonfinite_integrand_raises(self):
        m = BaseMeasure(pieces=((0.0, 1.0),))
        with pytest.raises(NonFinite):
            integrate(lambda y: math.nan if y > 0.3 else 1.0, m, tol=1e-6)
        with pytest.raises(NonFinite):
            integrate(lambda y: math.inf, BaseMeasure(atoms=((2.0, 1.0),)), tol=1e-6)

    def test_breakpoints_respected_for_steps(self):
        m = BaseMeasure(pieces=((0.0, 2.0),))
        step = lambda y: 1.0 if y < 1.3 else 5.0
        value, _ = integrate(step, m, tol=1e-9, breakpoints=(1.3,))
        assert value == pytest.approx(1.3 + 5.0 * 0.7, abs=1e-9)


class TestBaseMeasure:
    def test_pieces_must_be_disjoint(self):
        with pytest.raises(DomainError):
            BaseMeasure(pieces=((0.0, 1.0), (0.5, 2.0)))

    def test_atom_inside_piece_rejected(self):
        with pytest.raises(DomainError):
            BaseMeasure(pieces=((0.0, 2.0),), atoms=((1.0, 1.0),))

    def test_merge_unions_pieces_and_atoms(self):
        a = BaseMeasure(pieces=((0.0, 1.0),))
        b = BaseMeasure(pieces=((1.0, 2.0),), atoms=((3.0, 1.0),))
        m = a.merge(b)
        assert m.pieces == ((0.0, 2.0),)
        assert m.atoms == ((3.0, 1.0),)


class TestAld:
    def test_log_pdf_at_zero(self):
        d = make_ald(0.5)
        assert float(d.log_pdf(0.0)) == pytest.approx(math.log(0.25), abs=1e-15)

    def test_median_is_zero(self):
        d = make_ald(0.5)
        below = BaseMeasure(pieces=((-math.inf, 0.0),))
        value, _ = integrate(lambda z: float(np.exp(d.log_pdf(z))), below, tol=1e-12)
        assert value == pytest.approx(0.5, abs=1e-10)

    def test_quarter_quantile_closed_form(self):
        # oracle: integral of tau(1-tau)e^{z(1-tau)} over z<0 equals tau
        d = make_ald(0.25)
        below = BaseMeasure(pieces=((-math.inf, 0.0),))
        value, _ = integrate(lambda z: float(np.exp(d.log_pdf(z))), below, tol=1e-12)
        assert value == pytest.approx(0.25, abs=1e-10)

    def test_domain_error(self):
        for tau in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(DomainError):
                make_ald(tau)


class TestCatalog:
    def test_example1_fk_step_heights(self):
        d = catalog("example1_fk", b=0.4)
        assert float(np.exp(d.log_pdf(0.5))) == pytest.approx(0.4, abs=1e-15)
        assert float(np.exp(d.log_pdf(1.2))) == pytest.approx(1.2, abs=1e-15)
        assert float(np.exp(d.log_pdf(1.7))) == 0.0

    def test_example2_ga_total_mass(self):
        # oracle: closed form a/2 + (1 - a/2)
        d = catalog("example2_ga", a=0.6)
        value, _ = integrate(lambda y: float(np.exp(d.log_pdf(y))), d.measure, tol=1e-10,
                             breakpoints=d.breakpoints)
        assert value == pytest.approx(1.0, abs=1e-9)

    def test_example2_f0_tail_exponent_closed_form(self):
        d = catalog("example2_f0")
        u = np.array([0.875])
        y = d.icdf(u)
        e = d.tail_exponent(u)
        assert e[0] == pytest.approx(64.0, abs=1e-12)
        assert math.sqrt(y[0]) == pytest.approx(1.0 - math.exp(-64.0), abs=1e-15)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            catalog("example1_fk", b=0.6)
        with pytest.raises(DomainError):
            catalog("example2_ga", a=1.5)
        with pytest.raises(DomainError):
            catalog("example2_fk", k=2)
        with pytest.raises(WeightError):
            catalog(
                "mixture",
                components=[catalog("normal", mu=0.0, sigma=1.0)] * 2,
                weights=[0.6, 0.6],
            )

    @pytest.mark.parametrize(
        "name,params",
        [
            ("unif", {"lo": 0.0, "hi": 1.0}),
            ("unif", {"lo": 0.0, "hi": 2.0}),
            ("normal", {"mu": 0.3, "sigma": 1.2}),
            ("example1_fk", {"b": 0.3}),
            ("example1_fstar", {}),
            ("example2_fk", {"k": 4}),
            ("example2_ga", {"a": 0.7}),
            ("ald", {"tau": 0.3}),
        ],
    )
    def test_normalization(self, name, params):
        d = catalog(name, **params)
        value, _ = integrate(
            lambda y: float(np.exp(d.log_pdf(y))), d.measure, tol=1e-8,
            breakpoints=d.breakpoints,
        )
        assert value == pytest.approx(1.0, abs=1e-8)

    def test_example2_f0_normalization_with_analytic_tail(self):
        # the truth keeps ~17% of its mass within 1e-15 of y=1, far beyond float
        # quadrature; integrate to y* and add the closed-form tail 1 - F0(y*)
        d = catalog("example2_f0")
        y_star = 1.0 - 1e-6
        head = BaseMeasure(pieces=((0.0, y_star),))
        value, _ = integrate(
            lambda y: float(np.exp(d.log_pdf(y))), head, tol=1e-9, breakpoints=(0.5,)
        )
        tail = (-math.log(1.0 - math.sqrt(y_star))) ** -0.5
        assert value + tail == pytest.approx(1.0, abs=1e-7)

    def test_example2_f0_cdf_matches_lower_branch(self):
        d = catalog("example2_f0")
        head = BaseMeasure(pieces=((0.0, 0.5),))
        value, _ = integrate(lambda y: float(np.exp(d.log_pdf(y))), head, tol=1e-10)
        assert value == pytest.approx(E2_LOWER_CDF, abs=1e-9)


class TestSamplers:
    DKW = math.sqrt(math.log(2.0 / 1e-3) / (2.0 * 10**5))  # level 1e-3 at n=1e5

    def _check_dkw(self, values, cdf, quantile_points):
        emp = np.searchsorted(np.sort(values), quantile_points, side="right") / len(values)
        assert np.max(np.abs(emp - cdf(quantile_points))) <= self.DKW

    def test_unif_sampler_law(self):
        d = catalog("unif", lo=0.0, hi=2.0)
        batch = d.sample(10**5, seed=11)
        pts = np.linspace(0.05, 1.95, 20)
        self._check_dkw(batch.values, _unif_cdf(0.0, 2.0), pts)

    def test_ald_sampler_law(self):
        d = make_ald(0.3)
        batch = d.sample(10**5, seed=12)
        pts = np.linspace(-4.0, 8.0, 20)
        self._check_dkw(batch.values, _ald_cdf(0.3), pts)

    def test_example1_fk_sampler_law(self):
        d = catalog("example1_fk", b=0.35)
        batch = d.sample(10**5, seed=13)
        pts = np.linspace(0.05, 1.45, 20)
        self._check_dkw(batch.values, _example1_fk_cdf(0.35), pts)

    def test_normal_sampler_law(self):
        from scipy.special import ndtr

        d = catalog("normal", mu=1.0, sigma=2.0)
        batch = d.sample(10**5, seed=14)
        pts = np.linspace(-4.0, 6.0, 20)
        self._check_dkw(batch.values, lambda q: ndtr((q - 1.0) / 2.0), pts)

    def test_example2_f0_sampler_law_in_exponent_space(self):
        # compare in exponent space where the tail is representable:
        # P(e <= t) = F0 at the matching y, i.e. u <= 1 - t^{-1/2} for t above
        # the branch point
        d = catalog("example2_f0")
        batch = d.sample(10**5, seed=15)
        e = batch.tail_exponents
        ts = np.linspace(2.0, 40.0, 20)
        emp = np.searchsorted(np.sort(e), ts, side="right") / len(e)
        ana = 1.0 - ts**-0.5
        assert np.max(np.abs(emp - ana)) <= self.DKW

    def test_seed_reproducibility(self):
        d = catalog("normal", mu=0.0, sigma=1.0)
        a = d.sample(1000, seed=5, stream_id=3)
        b = d.sample(1000, seed=5, stream_id=3)
        c = d.sample(1000, seed=5, stream_id=4)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_sampler_output_in_support(self):
        for name, params in [
            ("example1_fk", {"b": 0.3}),
            ("example2_ga", {"a": 0.7}),
            ("example2_fk", {"k": 5}),
            ("example2_f0", {}),
        ]:
            d = catalog(name, **params)
            vals = d.sample(20_000, seed=21).values
            assert np.all(np.isfinite(vals))
            assert np.all(float(np.min(d.log_pdf(vals))) > -math.inf)

    def test_example2_f0_tail_identity_no_cancellation(self):
        # stored exponent equals (1-u)^-2 exactly on the upper branch
        d = catalog("example2_f0")
        u = np.array([0.9, 0.99, 1.0 - 1e-9, 1.0 - 1e-13])
        e = d.tail_exponent(u)
        assert np.array_equal(e, (1.0 - u) ** -2.0)
