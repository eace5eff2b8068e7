"""Random-cost problems, demand distributions and reproducible sampling streams."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

import numpy as np

from .geometry import ConvexSet, Interval
from .regularizers import RiskRegularizer, zero_level

# stream ids for the two independent draws of every iteration
STREAM_W1 = 0
STREAM_W2 = 1


def stream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based generator for one named stream of a master seed."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(seq))


def streams(master_seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    return stream(master_seed, STREAM_W1), stream(master_seed, STREAM_W2)


# ------------------------------------------------------------ distributions

@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"uniform needs a < b, got a={self.a}, b={self.b}")

    @property
    def support(self):
        return (self.a, self.b)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def quantile(self, q):
        return self.a + (self.b - self.a) * q

    def sample(self, rng, size):
        return rng.uniform(self.a, self.b, size=size)


@dataclass(frozen=True)
class Rayleigh:
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"rayleigh scale must be positive, got {self.scale}")

    @property
    def support(self):
        return (0.0, math.inf)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-0.5 * (x / self.scale) ** 2)

    def quantile(self, q):
        if q >= 1:
            return math.inf
        return self.scale * math.sqrt(-2.0 * math.log1p(-q))

    def sample(self, rng, size):
        return rng.rayleigh(self.scale, size=size)


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"exponential rate must be positive, got {self.rate}")

    @property
    def support(self):
        return (0.0, math.inf)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-self.rate * x)

    def quantile(self, q):
        if q >= 1:
            return math.inf
        return -math.log1p(-q) / self.rate

    def sample(self, rng, size):
        return rng.exponential(1.0 / self.rate, size=size)


def build_distribution(spec: dict):
    kind = spec.get("kind")
    if kind == "uniform":
        return Uniform(float(spec["a"]), float(spec["b"]))
    if kind == "rayleigh":
        return Rayleigh(float(spec["scale"]))
    if kind == "exponential":
        return Exponential(float(spec["rate"]))
    raise ValueError(f"unknown demand distribution {kind!r}")


# ------------------------------------------------------------------ problem

@dataclass(frozen=True)
class Problem:
    """A convex random cost with a subgradient selection, a sampler and a feasible set.

    ``cost(x, w)`` and ``subgradient(x, w)`` broadcast over the leading axes
    of ``w`` (whose last axis has length ``noise_dim``); ``sampler(rng, n)``
    returns an ``(n, noise_dim)`` array.
    """

    dimension: int
    noise_dim: int
    cost: Callable
    subgradient: Callable
    sampler: Callable
    feasible_set: ConvexSet
    bounds: Optional[tuple] = None
    strong_convexity: Optional[float] = None
    label: str = "problem"

    def __post_init__(self):
        if self.bounds is not None:
            lo, hi = self.bounds
            if not lo <= hi:
                raise ValueError(f"bounds must satisfy m_l <= m_h, got {self.bounds}")


def _quad_cost(x, w, sigma):
    d = x - w
    return sigma * np.sum(d * d, axis=-1)


def _quad_grad(x, w, sigma):
    return 2.0 * sigma * (x - w)


def _symmetric_uniform(rng, n, scale, dim):
    return rng.uniform(-scale, scale, size=(n, dim))


def _const_noise(rng, n, dim):
    return np.zeros((n, dim))


def quadratic_1d(sigma: float, noise_scale: float, box=(-2.0, 2.0)) -> Problem:
    """sigma * (x - w)^2 with w uniform on [-noise_scale, noise_scale]."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not noise_scale >= 0:
        raise ValueError(f"noise_scale must be nonnegative, got {noise_scale}")
    if isinstance(box, Interval):
        feasible = box
    else:
        feasible = Interval(float(box[0]), float(box[1]))
    a, b, s = feasible.a, feasible.b, float(noise_scale)
    if noise_scale > 0:
        sampler = partial(_symmetric_uniform, scale=s, dim=1)
    else:
        sampler = partial(_const_noise, dim=1)
    bounds = None
    if math.isfinite(a) and math.isfinite(b):
        gap = max(0.0, a - s, -s - b)
        reach = max(b + s, s - a)
        bounds = (sigma * gap * gap, sigma * reach * reach)
    return Problem(
        1, 1,
        partial(_quad_cost, sigma=float(sigma)),
        partial(_quad_grad, sigma=float(sigma)),
        sampler,
        feasible,
        bounds,
        2.0 * sigma,
        f"quadratic_1d(sigma={sigma!r}, noise_scale={noise_scale!r})",
    )


@dataclass(frozen=True)
class NewsvendorParams:
    Kp: float
    Ku: float
    Kh: float
    alpha: float
    h: float
    demand: object

    def __post_init__(self):
        for name in ("Kp", "Ku", "Kh"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.h >= 0:
            raise ValueError(f"h must be nonnegative, got {self.h}")
        if not self.capacity > 0:
            raise ValueError(
                f"feasible set is trivial: demand quantile at alpha plus h/Kh is {self.capacity}, must be positive"
            )

    @property
    def capacity(self) -> float:
        """Largest production level allowed by the holding-cost chance constraint."""
        return self.demand.quantile(self.alpha) + self.h / self.Kh


def _nv_cost(x, w, Kp, Ku):
    return Kp * x[..., 0] + Ku * np.maximum(w[..., 0] - x[..., 0], 0.0)


def _nv_grad(x, w, Kp, Ku):
    # right derivative in x: the shortage term is inactive when w == x
    return (Kp - Ku * (w > x)).astype(float)


def _demand_sampler(rng, n, demand):
    return demand.sample(rng, (n, 1))


def newsvendor_bounds(params: NewsvendorParams):
    """Tight cost range over the feasible set for bounded demand; None otherwise."""
    lo_w, hi_w = params.demand.support
    u = params.capacity
    if not (math.isfinite(hi_w) and math.isfinite(u)):
        return None
    Kp, Ku = params.Kp, params.Ku

    def F(x, w):
        return Kp * x + Ku * max(w - x, 0.0)

    m_l = min(F(x, lo_w) for x in (0.0, min(lo_w, u), u))
    m_h = max(F(x, hi_w) for x in (0.0, u))
    return (m_l, m_h)


def newsvendor(params: NewsvendorParams) -> Problem:
    kw = dict(Kp=float(params.Kp), Ku=float(params.Ku))
    return Problem(
        1, 1,
        partial(_nv_cost, **kw),
        partial(_nv_grad, **kw),
        partial(_demand_sampler, demand=params.demand),
        Interval(0.0, params.capacity),
        newsvendor_bounds(params),
        None,
        "newsvendor",
    )


def newsvendor_closed_form(params: NewsvendorParams) -> float:
    """Risk-neutral optimal production level."""
    if params.Ku <= params.Kp:
        return 0.0
    critical = params.demand.quantile((params.Ku - params.Kp) / params.Ku)
    return min(critical, params.capacity)


# --------------------------------------------------------- kappa condition

@dataclass
class ConditionReport:
    passed: bool
    kappa: float
    max_probability: float
    worst_x: Optional[np.ndarray] = None
    note: str = ""


def check_kappa_condition(problem: Problem, reg: RiskRegularizer, p: float, n_samples: int = 100_000,
                          n_points: int = 5, rng: Optional[np.random.Generator] = None,
                          threshold: float = 1 - 1e-3) -> ConditionReport:
    """Monte-Carlo check that the centered cost exceeds sup{R = 0} with positive probability.

    Only relevant for p > 1, where it makes the objective differentiable.
    """
    if p == 1:
        return ConditionReport(True, math.nan, 0.0, note="vacuous for p = 1")
    kappa = zero_level(reg)
    if kappa == -math.inf:
        return ConditionReport(True, kappa, 0.0, note="regularizer never vanishes")
    if rng is None:
        rng = np.random.default_rng(0)
    xs = problem.feasible_set.sample(rng, n_points)
    worst, worst_x = -1.0, None
    for x in xs:
        F = problem.cost(x, problem.sampler(rng, n_samples))
        mu = F.mean()
        # relative slack so that a constant cost counts as sitting at its mean
        slack = 1e-12 * max(1.0, abs(mu))
        prob = float(np.mean(F - mu <= kappa + slack))
        if prob > worst:
            worst, worst_x = prob, x
    return ConditionReport(worst < threshold, kappa, worst, worst_x)


# ------------------------------------------------------------------ config

def build(spec: dict) -> Problem:
    """Construct a problem from ``{"name": ..., "params": {...}}``."""
    name = spec.get("name")
    params = dict(spec.get("params", {}))
    if name == "quadratic_1d":
        box = params.pop("box", (-2.0, 2.0))
        return quadratic_1d(float(params.pop("sigma")), float(params.pop("noise_scale")), tuple(box), **params)
    if name == "newsvendor":
        return newsvendor(build_newsvendor_params(params))
    raise ValueError(f"unknown problem {name!r}; expected 'quadratic_1d' or 'newsvendor'")


def build_newsvendor_params(params: dict) -> NewsvendorParams:
    params = dict(params)
    demand = build_distribution(params.pop("demand"))
    return NewsvendorParams(
        float(params["Kp"]), float(params["Ku"]), float(params.get("Kh", 1.0)),
        float(params.get("alpha", 1.0)), float(params.get("h", 0.0)), demand,
    )
