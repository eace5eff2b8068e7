import json
import math
from pathlib import Path

import numpy as np
import pytest

from semidev import problems as P
from semidev import regularizers as R

FIXTURES = Path(__file__).parent / "fixtures"


def nv_params(Kp=1.0, Ku=4.0, alpha=1.0, h=10.0, demand=None):
    return P.NewsvendorParams(Kp, Ku, 1.0, alpha, h, demand or P.Uniform(0.0, 1.0))


class TestQuadratic:
    def test_direct_evaluation(self):
        q = P.quadratic_1d(0.5, 1.0)
        assert q.cost(np.array([0.0]), np.array([1.0])) == 0.5
        assert q.subgradient(np.array([0.0]), np.array([1.0])).tolist() == [-1.0]

    def test_bounds_and_strong_convexity(self):
        q = P.quadratic_1d(0.5, 1.0, (-2.0, 2.0))
        assert q.bounds == (0.0, 0.5 * 9.0)
        assert q.strong_convexity == 1.0
        far = P.quadratic_1d(1.0, 1.0, (3.0, 4.0))
        assert far.bounds == (4.0, 25.0)

    def test_deterministic_sampler(self):
        q = P.quadratic_1d(1.0, 0.0)
        assert np.array_equal(q.sampler(np.random.default_rng(0), 5), np.zeros((5, 1)))

    def test_deterministic_optimum_at_zero(self):
        from semidev import diagnostics as D

        q = P.quadratic_1d(0.5, 0.0, (-1.0, 1.0))
        grid = np.round(np.arange(-100, 101) * 0.01, 12)
        for reg, c in ((R.positive_part(), 0.0), (R.entropic(1.0), 1.0)):
            x, _ = D.grid_oracle(q, reg, 1, c, grid, 100, 0)
            assert x[0] == 0.0

    def test_rejects(self):
        with pytest.raises(ValueError):
            P.quadratic_1d(0.0, 1.0)
        with pytest.raises(ValueError):
            P.quadratic_1d(1.0, -1.0)


class TestNewsvendor:
    def test_direct_evaluation(self):
        nv = P.newsvendor(nv_params())
        assert nv.cost(np.array([2.0]), np.array([3.0])) == 6.0
        assert nv.subgradient(np.array([2.0]), np.array([1.0])).tolist() == [1.0]
        assert nv.subgradient(np.array([2.0]), np.array([3.0])).tolist() == [-3.0]
        # right derivative at the kink
        assert nv.subgradient(np.array([2.0]), np.array([2.0])).tolist() == [1.0]

    def test_feasible_set(self):
        nv = P.newsvendor(nv_params(alpha=0.5, h=2.0))
        assert (nv.feasible_set.a, nv.feasible_set.b) == (0.0, 2.5)

    def test_closed_form_examples(self):
        assert P.newsvendor_closed_form(nv_params(Kp=4.0, Ku=3.0)) == 0.0
        assert P.newsvendor_closed_form(nv_params(Kp=4.0, Ku=3.0, demand=P.Rayleigh(2.0))) == 0.0
        fx = json.loads((FIXTURES / "newsvendor_closed_form.json").read_text())
        for case in fx["cases"]:
            got = P.newsvendor_closed_form(nv_params(alpha=case["alpha"], h=case["h"]))
            assert got == pytest.approx(case["closed_form"], abs=1e-12)
            assert got == pytest.approx(case["numeric_minimizer"], abs=1e-6)

    def test_binding_constraint_holds_with_equality(self):
        params = nv_params(alpha=0.5, h=0.0)
        x = P.newsvendor_closed_form(params)
        # holding-cost chance constraint P(Kh (x - W) <= h) >= alpha is tight
        assert params.demand.cdf(x - params.h / params.Kh) == pytest.approx(params.alpha)

    def test_bounds(self):
        nv = P.newsvendor(nv_params(alpha=0.5, h=0.0))
        # u = 0.5: min cost at w = 0 is 0 (x = 0), max at w = 1 is max(4, 0.5 + 2) = 4
        assert nv.bounds == (0.0, 4.0)
        assert P.newsvendor(nv_params(demand=P.Rayleigh(1.0))).bounds is None

    def test_bounds_envelope(self):
        params = nv_params(alpha=0.8, h=0.3)
        nv = P.newsvendor(params)
        rng = np.random.default_rng(5)
        w = nv.sampler(rng, 1_000_000)
        x = nv.feasible_set.sample(rng, 1_000_000)
        F = nv.cost(x, w)
        m_l, m_h = nv.bounds
        assert F.min() >= m_l and F.max() <= m_h

    @pytest.mark.parametrize("kw", [dict(Kp=0.0), dict(alpha=1.5), dict(h=-1.0)])
    def test_param_validation(self, kw):
        with pytest.raises(ValueError):
            nv_params(**kw)

    def test_trivial_feasible_set_rejected(self):
        with pytest.raises(ValueError, match="trivial"):
            nv_params(alpha=0.0, h=0.0)


class TestDistributions:
    @pytest.mark.parametrize("dist", [P.Uniform(-1.0, 2.0), P.Rayleigh(1.5), P.Exponential(2.0)])
    def test_quantile_inverts_cdf(self, dist):
        for q in (0.1, 0.5, 0.9):
            assert dist.cdf(dist.quantile(q)) == pytest.approx(q, abs=1e-12)

    def test_unbounded_quantile(self):
        assert P.Exponential(1.0).quantile(1.0) == math.inf

    def test_build(self):
        assert P.build_distribution({"kind": "rayleigh", "scale": 2}) == P.Rayleigh(2.0)
        with pytest.raises(ValueError):
            P.build_distribution({"kind": "cauchy"})


@pytest.mark.parametrize("make", [lambda: P.quadratic_1d(0.7, 1.3), lambda: P.newsvendor(nv_params())])
def test_subgradient_inequality_and_convexity(make):
    prob = make()
    rng = np.random.default_rng(2)
    n = 10_000
    x = prob.feasible_set.sample(rng, n)
    xp = prob.feasible_set.sample(rng, n)
    w = prob.sampler(rng, n)
    F = prob.cost(x, w)
    Fp = prob.cost(xp, w)
    g = prob.subgradient(x, w)
    assert np.all(Fp >= F + np.sum(g * (xp - x), axis=-1) - 1e-10)
    mid = prob.cost(0.5 * (x + xp), w)
    assert np.all(mid <= 0.5 * (F + Fp) + 1e-10)


class TestStreams:
    def test_reproducible(self):
        a = P.stream(42, P.STREAM_W1).random(10)
        b = P.stream(42, P.STREAM_W1).random(10)
        assert np.array_equal(a, b)

    def test_streams_uncorrelated(self):
        w1, w2 = P.streams(42)
        a, b = w1.random(100_000), w2.random(100_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.02
        assert not np.array_equal(a[:10], b[:10])

    def test_seeds_differ(self):
        assert not np.array_equal(P.stream(1, 0).random(5), P.stream(2, 0).random(5))


class TestKappa:
    def test_slack_passes_trivially(self):
        rep = P.check_kappa_condition(P.quadratic_1d(0.5, 0.0), R.slack_adjust(R.positive_part(), 0.1), 2)
        assert rep.passed and rep.kappa == -math.inf

    def test_deterministic_fails(self):
        rep = P.check_kappa_condition(P.quadratic_1d(0.5, 0.0), R.positive_part(), 2, n_samples=1000)
        assert not rep.passed
        assert rep.max_probability == 1.0

    def test_noisy_quadratic_passes(self):
        rep = P.check_kappa_condition(P.quadratic_1d(0.5, 1.0), R.positive_part(), 2)
        assert rep.passed and rep.kappa == 0.0

    def test_vacuous_for_p1(self):
        assert P.check_kappa_condition(P.quadratic_1d(0.5, 0.0), R.positive_part(), 1).passed


def test_build_from_config():
    q = P.build({"name": "quadratic_1d", "params": {"sigma": 0.5, "noise_scale": 1, "box": [-1, 1]}})
    assert q.feasible_set.b == 1.0
    nv = P.build({"name": "newsvendor", "params": {"Kp": 1, "Ku": 4, "h": 0.5,
                                                   "demand": {"kind": "uniform", "a": 0, "b": 1}}})
    assert nv.feasible_set.b == 1.5
    with pytest.raises(ValueError, match="unknown problem"):
        P.build({"name": "portfolio"})
