import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit, ndtr

from semidev import regularizers as R

GRID = np.round(np.arange(-1000, 1001) * 0.01, 10)
NV_FIXTURE = dict(psi1=0.2, psi2=0.5, t1=1.0, t2=2.0, Ku=1.0)


def builtins():
    return [
        R.positive_part(),
        R.entropic(1.0),
        R.entropic(10.0),
        R.gaussian_antiderivative(),
        R.newsvendor_piecewise(**NV_FIXTURE),
        R.slack_adjust(R.positive_part(), 0.1),
        R.slack_adjust(R.entropic(1.0), 0.5),
    ]


class TestCatalog:
    def test_positive_part(self):
        reg = R.positive_part()
        assert reg.value(-2.0) == 0.0
        assert reg.value(3.0) == 3.0
        assert reg.subderivative(0.0) == 1.0
        assert reg.subderivative(-1e-300) == 0.0
        assert reg.kink_points == (0.0,)

    def test_entropic(self):
        reg = R.entropic(1.0)
        assert reg.value(0.0) == pytest.approx(math.log(2.0), abs=1e-15)
        assert reg.subderivative(0.0) == 0.5
        assert reg.kink_points == ()
        assert abs(R.entropic(50.0).value(5.0) - 5.0) < 1e-6

    def test_entropic_is_overflow_safe(self):
        reg = R.entropic(10.0)
        with np.errstate(over="raise"):
            assert reg.value(1e4) == pytest.approx(1e4)
            assert reg.value(-1e4) == 0.0
            assert reg.subderivative(1e4) == 1.0

    @pytest.mark.parametrize("t", [0.0, -1.0, math.inf])
    def test_entropic_rejects_bad_t(self, t):
        with pytest.raises(ValueError):
            R.entropic(t)

    def test_gaussian_antiderivative(self):
        reg = R.gaussian_antiderivative()
        assert reg.value(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
        assert reg.subderivative(0.0) == 0.5
        assert abs(reg.value(10.0) - 10.0) < 1e-8

    def test_newsvendor_piecewise_values(self):
        reg = R.newsvendor_piecewise(**NV_FIXTURE)
        assert reg.value(-1.0) == 0.0
        assert reg.value(0.5) == pytest.approx(0.1, abs=1e-15)
        # second and third pieces by hand: 0.5*1.5 + (0.2-0.5)*1 and 3 + (0.5-1)*2 + (0.2-0.5)*1
        assert reg.value(1.5) == pytest.approx(0.45, abs=1e-15)
        assert reg.value(3.0) == pytest.approx(1.7, abs=1e-15)
        assert reg.kink_points == (0.0, 1.0, 2.0)

    def test_newsvendor_piecewise_continuity(self):
        reg = R.newsvendor_piecewise(**NV_FIXTURE)
        for k in reg.kink_points:
            left = reg.value(np.nextafter(k, -np.inf))
            right = reg.value(np.nextafter(k, np.inf))
            assert abs(left - right) <= 1e-12
            assert abs(reg.value(k) - right) <= 1e-12

    def test_newsvendor_piecewise_slopes_right_continuous(self):
        reg = R.newsvendor_piecewise(**NV_FIXTURE)
        xs = np.array([-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 5.0])
        assert reg.subderivative(xs).tolist() == [0.0, 0.2, 0.2, 0.5, 0.5, 1.0, 1.0]

    @pytest.mark.parametrize("kw", [
        dict(psi1=0.6, psi2=0.5, t1=1.0, t2=2.0, Ku=1.0),
        dict(psi1=0.2, psi2=1.5, t1=1.0, t2=2.0, Ku=1.0),
        dict(psi1=-0.1, psi2=0.5, t1=1.0, t2=2.0, Ku=1.0),
        dict(psi1=0.2, psi2=0.5, t1=2.0, t2=1.0, Ku=1.0),
        dict(psi1=0.2, psi2=0.5, t1=0.0, t2=1.0, Ku=1.0),
        dict(psi1=0.2, psi2=0.5, t1=1.0, t2=2.0, Ku=0.0),
    ])
    def test_newsvendor_piecewise_rejects(self, kw):
        with pytest.raises(ValueError):
            R.newsvendor_piecewise(**kw)

    def test_slack_adjust(self):
        pos = R.positive_part()
        assert R.slack_adjust(pos, 0.1).value(-5.0) == pytest.approx(0.1)
        assert R.slack_adjust(pos, 0.3).subderivative(1.0) == 1.0
        same = R.slack_adjust(R.entropic(1.0), 0.0)
        assert np.array_equal(same.value(GRID), R.entropic(1.0).value(GRID))
        with pytest.raises(ValueError):
            R.slack_adjust(pos, -0.1)

    def test_zero_levels(self):
        assert R.zero_level(R.positive_part()) == 0.0
        assert R.zero_level(R.slack_adjust(R.positive_part(), 0.1)) == -math.inf
        assert R.zero_level(R.entropic(1.0)) == -math.inf
        assert R.zero_level(R.newsvendor_piecewise(0.0, 0.5, 1.0, 2.0, 2.0)) == 2.0
        numeric = R.RiskRegularizer(lambda x: np.maximum(np.asarray(x) - 0.3, 0.0), lambda x: 1.0)
        assert R.zero_level(numeric) == pytest.approx(0.3, abs=1e-12)


class TestAxioms:
    @pytest.mark.parametrize("reg", builtins(), ids=lambda r: r.label)
    def test_builtins_pass(self, reg):
        rep = R.validate_axioms(reg, GRID, 1e-12)
        assert rep.passed, rep.failed()

    def test_slope_two_fails_nonexpansive(self):
        fake = R.RiskRegularizer(lambda x: 2.0 * np.asarray(x), lambda x: np.full_like(np.asarray(x, float), 2.0))
        rep = R.validate_axioms(fake, GRID)
        assert not rep["nonexpansive"].passed
        assert rep["nondecreasing"].passed

    def test_negation_fails_monotone_and_nonneg(self):
        fake = R.RiskRegularizer(lambda x: -np.asarray(x), lambda x: np.full_like(np.asarray(x, float), -1.0))
        rep = R.validate_axioms(fake, GRID)
        assert not rep["nondecreasing"].passed
        assert not rep["nonnegative"].passed
        assert rep["nonnegative"].first_violation == (0.01,)

    def test_concave_map_fails_convexity(self):
        fake = R.RiskRegularizer(lambda x: np.minimum(np.maximum(x, 0.0), 1.0),
                                 lambda x: ((np.asarray(x) >= 0) & (np.asarray(x) < 1)).astype(float))
        rep = R.validate_axioms(fake, GRID)
        assert not rep["midpoint_convex"].passed
        assert not rep["subderivative_nondecreasing"].passed

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            R.validate_axioms(R.positive_part(), [0.0, 1.0])

    @pytest.mark.parametrize("reg", builtins(), ids=lambda r: r.label)
    def test_growth_bound(self, reg):
        # R(x) <= R(0) + |x|
        assert np.all(reg.value(GRID) <= reg.value(0.0) + np.abs(GRID) + 1e-12)


class TestCdfRepresentation:
    def test_dirac_gives_positive_part(self):
        reg = R.from_cdf(R.CdfSpec(lambda x: (np.asarray(x) >= 0).astype(float)))
        x = np.linspace(-5, 5, 1001)
        assert np.max(np.abs(reg.value(x) - np.maximum(x, 0))) <= 1e-12

    def test_logistic_gives_entropic(self):
        reg = R.from_cdf(R.CdfSpec(expit))
        x = np.linspace(-5, 5, 1001)
        assert np.max(np.abs(reg.value(x) - R.entropic(1.0).value(x))) <= 1e-4

    def test_normal_gives_gaussian_antiderivative(self):
        reg = R.from_cdf(R.CdfSpec(ndtr))
        x = np.linspace(-5, 5, 1001)
        assert np.max(np.abs(reg.value(x) - R.gaussian_antiderivative().value(x))) <= 1e-4

    def test_scale_and_intercept(self):
        reg = R.from_cdf(R.CdfSpec(ndtr, 0.5, 0.2))
        x = np.linspace(-3, 3, 61)
        expect = 0.5 * R.gaussian_antiderivative().value(x) + 0.2
        assert np.max(np.abs(reg.value(x) - expect)) <= 1e-4
        assert np.allclose(reg.subderivative(x), 0.5 * ndtr(x))

    def test_constructed_regularizer_is_valid(self):
        reg = R.from_cdf(R.CdfSpec(expit))
        assert R.validate_axioms(reg, np.linspace(-10, 10, 401), 1e-12).passed

    def test_heavy_left_tail_rejected(self):
        # a Cauchy cdf has infinite left-tail integral
        with pytest.raises(ValueError, match="diverges"):
            R.from_cdf(R.CdfSpec(lambda x: 0.5 + np.arctan(np.asarray(x)) / np.pi))

    @pytest.mark.parametrize("kw", [dict(scale=0.0), dict(scale=1.5), dict(intercept=-1.0), dict(quadrature_step=0.0)])
    def test_spec_validation(self, kw):
        with pytest.raises(ValueError):
            R.CdfSpec(expit, **kw)

    def test_extract_positive_part(self):
        spec = R.extract_cdf(R.positive_part(), GRID)
        assert spec.scale == 1.0 and spec.intercept == 0.0
        assert spec.cdf(-0.01) == 0.0 and spec.cdf(0.0) == 1.0

    def test_extract_entropic(self):
        spec = R.extract_cdf(R.entropic(1.0), np.linspace(-50, 50, 1001))
        x = np.linspace(-50, 50, 1001)
        assert np.max(np.abs(spec.cdf(x) - expit(x))) <= 1e-12

    def test_extract_slack_intercept(self):
        assert R.extract_cdf(R.slack_adjust(R.positive_part(), 0.5), GRID).intercept == 0.5

    def test_extract_constant_rejected(self):
        flat = R.RiskRegularizer(lambda x: np.zeros_like(np.asarray(x, float)), lambda x: np.zeros_like(np.asarray(x, float)))
        with pytest.raises(ValueError, match="widen"):
            R.extract_cdf(flat, GRID)

    @pytest.mark.parametrize("reg", builtins(), ids=lambda r: r.label)
    def test_round_trip(self, reg):
        back = R.from_cdf(R.extract_cdf(reg, GRID))
        keep = np.ones(GRID.size, bool)
        for k in reg.kink_points:
            keep &= np.abs(GRID - k) >= 1e-3
        assert np.max(np.abs(back.value(GRID[keep]) - reg.value(GRID[keep]))) <= 1e-4


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(-50, 50), st.floats(-50, 50))
def test_entropic_nonexpansive_property(t, a, b):
    reg = R.entropic(t)
    assert abs(reg.value(a) - reg.value(b)) <= abs(a - b) + 1e-12
    assert reg.value(0.5 * (a + b)) <= 0.5 * (reg.value(a) + reg.value(b)) + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0.1, 10))
def test_newsvendor_piecewise_axioms_property(p1, p2, t1, dt, ku):
    psi1, psi2 = sorted((p1, p2))
    reg = R.newsvendor_piecewise(psi1, psi2, t1, t1 + dt, ku)
    grid = np.linspace(-5, 5 + ku * (t1 + dt), 301)
    assert R.validate_axioms(reg, grid, 1e-12).passed
