import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given, settings
from hypothesis import strategies as st

from finsler_needles.comparison import CdParams
from finsler_needles.errors import NonSmoothDensity, OverlappingIntervals
from finsler_needles.needle1d import (
    AsymLine,
    boundary_measure_1d,
    check_cd_density,
    check_differential_form,
    check_entropy_convexity,
    check_mcp_ratio,
    displacement_interpolate,
    exp_tilt,
    from_grid,
    gaussian,
    mollify,
    profile_1d,
    profile_curve,
    sin_power,
    uniform,
)

SIN2 = sin_power(3)


class TestDensity:
    @pytest.mark.parametrize("rho", [uniform(), gaussian(1.0), SIN2, exp_tilt(1.0), gaussian(2.0, a=-3, b=3)])
    def test_normalized(self, rho):
        lo, hi = rho.support
        x = np.linspace(lo, hi, 200_001)
        assert trapezoid(rho.pdf(x), x) == pytest.approx(1.0, abs=1e-6)
        assert rho.cdf(hi) == pytest.approx(1.0, abs=1e-9)

    def test_quantile_inverts_cdf(self):
        u = np.linspace(0.01, 0.99, 51)
        for rho in (gaussian(1.0), SIN2, exp_tilt(2.0)):
            assert rho.cdf(rho.quantile(u)) == pytest.approx(u, abs=1e-10)

    def test_gaussian_median_density(self):
        assert float(gaussian(1.0).pdf(0.0)) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-10)


def test_asym_line_reversibility():
    assert AsymLine(2.0).reversibility == 2.0
    assert AsymLine(0.25).reversibility == 4.0
    line = AsymLine(3.0)
    assert line.distance(0.0, 1.0) == 1.0
    assert line.distance(1.0, 0.0) == 3.0


class TestCdDensity:
    @pytest.mark.parametrize("N", [-2.0, 0.0, 3.0, math.inf])
    def test_uniform_equality(self, N):
        rep = check_cd_density(uniform(), CdParams(0.0, N))
        assert rep.passed and rep.max_abs_margin <= 1e-8

    def test_gaussian_equality(self):
        rep = check_cd_density(gaussian(1.0), CdParams(1.0, math.inf))
        assert rep.passed and rep.max_abs_margin <= 1e-8

    def test_sin_power(self):
        rep = check_cd_density(SIN2, CdParams(2.0, 3.0))
        assert rep.passed and rep.max_abs_margin <= 1e-8

    def test_sharpness_flip(self):
        assert check_cd_density(SIN2, CdParams(2.5, 3.0)).violations > 0

    def test_monotone_in_K(self):
        for K in (1.5, 0.0, -1.0):
            assert check_cd_density(SIN2, CdParams(K, 3.0), trials=2000).passed

    def test_report_records_seed(self):
        rep = check_cd_density(uniform(), CdParams(0.0, 3.0), trials=10, seed=7)
        assert rep.to_dict()["seed"] == 7


class TestMcp:
    def test_uniform(self):
        assert check_mcp_ratio(uniform(), CdParams(0.0, 3.0)).passed

    def test_sin_power_equality(self):
        rep = check_mcp_ratio(SIN2, CdParams(2.0, 3.0), a=0.0, b=math.pi)
        assert rep.passed and rep.max_abs_margin <= 1e-8

    def test_truncated_gaussian_violates(self):
        rep = check_mcp_ratio(gaussian(1.0, a=-3.0, b=3.0), CdParams(0.0, 3.0))
        assert not rep.passed and rep.worst_margin < -1e-3


class TestDifferentialForm:
    def test_gaussian(self):
        rep = check_differential_form(gaussian(2.0), CdParams(2.0, math.inf))
        assert rep.passed and rep.max_abs_margin <= 1e-12

    def test_sin_power(self):
        rep = check_differential_form(SIN2, CdParams(2.0, 3.0))
        assert rep.passed and rep.max_abs_margin <= 1e-9

    def test_sin_power_finite_differences(self):
        psi = lambda t: -2 * np.log(np.sin(t))
        t, h = np.linspace(0.5, 2.6, 50), 1e-4
        d1 = (psi(t + h) - psi(t - h)) / (2 * h)
        d2 = (psi(t + h) - 2 * psi(t) + psi(t - h)) / h ** 2
        assert d2 - d1 ** 2 / 2 == pytest.approx(2.0, abs=1e-6)

    def test_exp_tilt(self):
        rep = check_differential_form(exp_tilt(1.0), CdParams(0.0, math.inf))
        assert rep.passed and rep.worst_margin == 0.0

    def test_grid_density_rejected(self):
        with pytest.raises(NonSmoothDensity):
            check_differential_form(from_grid([0, 1, 2], [1, 2, 1]), CdParams(0.0, math.inf))


class TestMollify:
    def test_uniform_interior_unchanged(self):
        sm = mollify(uniform(), CdParams(0.0, 3.0), 0.01)
        t = np.linspace(0.02, 0.98, 97)
        assert np.exp(sm.log_unnormalized(t)) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_keeps_curvature(self):
        sm = mollify(gaussian(1.0), CdParams(1.0, math.inf), 0.05)
        assert check_differential_form(sm, CdParams(1.0 - 1e-3, math.inf)).passed

    def test_sin_power_keeps_cd(self):
        sm = mollify(SIN2, CdParams(2.0, 3.0), 0.01)
        assert check_cd_density(sm, CdParams(2.0, 3.0), trials=3000).passed
        assert check_differential_form(sm, CdParams(2.0 - 1e-3, 3.0)).passed

    def test_renormalized(self):
        sm = mollify(SIN2, CdParams(2.0, 3.0), 0.05)
        assert sm.cdf(sm.b) == pytest.approx(1.0, abs=1e-9)
        assert sm.meta["raw_mass"] > 0


class TestDisplacement:
    def test_identity(self):
        out, w2 = displacement_interpolate(gaussian(1.0), gaussian(1.0), 0.3)
        assert w2 == pytest.approx(0.0, abs=1e-9)
        x = np.linspace(-3, 3, 13)
        assert out.pdf(x) == pytest.approx(gaussian(1.0).pdf(x), abs=1e-6)

    def test_gaussian_translation(self):
        m = 2.0
        out, w2 = displacement_interpolate(gaussian(1.0), gaussian(1.0, center=m), 0.25)
        assert w2 == pytest.approx(m, abs=1e-6)
        x = np.linspace(-2, 3, 11)
        assert out.pdf(x) == pytest.approx(gaussian(1.0, center=0.5).pdf(x), abs=1e-6)

    def test_uniform_translation(self):
        out, _ = displacement_interpolate(uniform(0, 1), uniform(1, 2), 0.5)
        assert (out.a, out.b) == pytest.approx((0.5, 1.5))
        assert out.pdf(np.array([0.7, 1.2])) == pytest.approx(1.0)

    def test_geodesic_property(self):
        r0, r1 = gaussian(1.0), gaussian(4.0, center=1.0)
        _, w = displacement_interpolate(r0, r1, 0.0)
        mid, _ = displacement_interpolate(r0, r1, 0.3)
        end, _ = displacement_interpolate(r0, r1, 0.8)
        _, w_part = displacement_interpolate(mid, end, 0.0)
        assert w_part == pytest.approx(0.5 * w, abs=1e-5)


class TestEntropy:
    def test_gaussian_reference(self):
        V = lambda t: 0.5 * np.asarray(t) ** 2
        rep = check_entropy_convexity(gaussian(1.0, center=-1), gaussian(1.0, center=2), CdParams(1.0, math.inf),
                                      [0.25, 0.5, 0.75], reference_potential=V)
        assert rep.passed
        for row in rep.rows:
            assert row["entropy"] == pytest.approx(row["bound"], abs=1e-4)

    def test_ess_sup_translation(self):
        rep = check_entropy_convexity(uniform(0, 1), uniform(2, 3), CdParams(0.0, 0.0), [0.25, 0.5, 0.75])
        assert rep.passed
        for row in rep.rows:
            assert row["entropy"] == pytest.approx(1.0) and row["bound"] == pytest.approx(1.0)

    def test_renyi_dilation(self):
        rep = check_entropy_convexity(uniform(0, 1), uniform(0, 3), CdParams(0.0, 2.0), np.linspace(0.1, 0.9, 9))
        assert rep.passed


class TestBoundary:
    def test_examples(self):
        assert boundary_measure_1d(uniform(), AsymLine(1.0), [(0.2, 0.5)]) == pytest.approx(2.0)
        assert boundary_measure_1d(uniform(), AsymLine(4.0), [(0.5, 1.0)]) == pytest.approx(0.25)
        assert boundary_measure_1d(SIN2, AsymLine(2.0), [(0.0, math.pi)]) == 0.0

    def test_difference_quotient(self):
        eps = 1e-6
        # B+([0.2,0.5], eps) = [0.2 - eps, 0.5 + eps] under the symmetric line
        assert ((0.3 + 2 * eps) - 0.3) / eps == pytest.approx(boundary_measure_1d(uniform(), AsymLine(1.0), [(0.2, 0.5)]))

    def test_overlap(self):
        with pytest.raises(OverlappingIntervals):
            boundary_measure_1d(uniform(), AsymLine(1.0), [(0.1, 0.5), (0.4, 0.6)])


class TestProfile1D:
    def test_uniform(self):
        assert profile_1d(uniform(), AsymLine(1.0), 0.3) == pytest.approx(1.0)

    def test_gaussian_median(self):
        assert profile_1d(gaussian(1.0), AsymLine(1.0), 0.5) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-9)

    def test_backward_end_preferred(self):
        res = profile_1d(uniform(), AsymLine(2.0), 0.3, detail=True)
        assert res.value == pytest.approx(0.5)
        assert res.kind == "right"
        assert res.interval == pytest.approx((0.7, 1.0))

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.25, 6.0))
    def test_reversibility_comparison(self, lam_b):
        thetas = np.linspace(0.1, 0.9, 9)
        sym = profile_curve(SIN2, AsymLine(1.0), thetas, 2000)
        asym = profile_curve(SIN2, AsymLine(lam_b), thetas, 2000)
        assert np.all(asym >= sym / max(lam_b, 1.0) - 1e-12)
