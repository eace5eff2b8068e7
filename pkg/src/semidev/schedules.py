"""Stepsize sequences, exponent feasibility checks and rate-exponent calculators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class StepsizeSchedule:
    def __call__(self, n: int) -> float:
        raise NotImplementedError

    def block(self, start: int, count: int) -> np.ndarray:
        """Values for n = start, ..., start + count - 1."""
        return np.array([self(n) for n in range(start, start + count)], dtype=float)


@dataclass(frozen=True)
class Subharmonic(StepsizeSchedule):
    """initial at n = 0, n**(-tau) afterwards."""

    tau: float
    initial: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.tau <= 1.0):
            raise ValueError(f"subharmonic exponent must lie in (0, 1], got {self.tau}")
        if not self.initial > 0:
            raise ValueError(f"initial stepsize must be positive, got {self.initial}")

    def __call__(self, n):
        # share the vectorized path so pointwise and block values agree bitwise
        return float(self.block(n, 1)[0])

    def block(self, start, count):
        n = np.arange(start, start + count, dtype=float)
        out = np.empty(count)
        pos = n > 0
        out[pos] = n[pos] ** -self.tau
        out[~pos] = self.initial
        return out


@dataclass(frozen=True)
class StronglyConvexAlpha(StepsizeSchedule):
    """1 / (sigma * n) for n >= 1, and 1 at n = 0."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"strong convexity modulus must be positive, got {self.sigma}")

    def __call__(self, n):
        return 1.0 if n == 0 else 1.0 / (self.sigma * n)

    def block(self, start, count):
        n = np.arange(start, start + count, dtype=float)
        out = np.ones(count)
        pos = n > 0
        out[pos] = 1.0 / (self.sigma * n[pos])
        return out


@dataclass(frozen=True)
class Constant(StepsizeSchedule):
    v: float

    def __post_init__(self):
        if not (0.0 < self.v <= 1.0):
            raise ValueError(f"constant stepsize must lie in (0, 1], got {self.v}")

    def __call__(self, n):
        return self.v

    def block(self, start, count):
        return np.full(count, self.v)


@dataclass(frozen=True)
class Harmonic(StepsizeSchedule):
    """scale / n for n >= 1 and ``initial`` at n = 0 (used as a counterexample)."""

    scale: float = 1.0
    initial: float = 1.0

    def __call__(self, n):
        return self.initial if n == 0 else self.scale / n


@dataclass(frozen=True)
class ExponentTriple:
    tau1: float
    tau2: float
    tau3: Optional[float] = None


@dataclass
class FeasibilityReport:
    feasible: bool
    violations: list = field(default_factory=list)

    def __bool__(self):
        return self.feasible


def check_pathwise_feasible(t: ExponentTriple, p: float) -> FeasibilityReport:
    """Strict interval checks on the subharmonic exponents, no tolerance slack."""
    bad = []
    t1, t2, t3 = t.tau1, t.tau2, t.tau3
    if p > 1:
        if not (t1 > 7 / 8):
            bad.append(f"7/8 < tau1 (tau1={t1})")
        if not (t1 <= 1):
            bad.append(f"tau1 <= 1 (tau1={t1})")
        if not (t2 > 3 / 4):
            bad.append(f"3/4 < tau2 (tau2={t2})")
        if not (t2 < 2 * t1 - 1):
            bad.append(f"tau2 < 2*tau1 - 1 (tau2={t2}, 2*tau1-1={2 * t1 - 1})")
        if t3 is None:
            bad.append("tau3 required when p > 1")
        else:
            if not (t3 > 1 / 2):
                bad.append(f"1/2 < tau3 (tau3={t3})")
            if not (t3 < 2 * t2 - 1):
                bad.append(f"tau3 < 2*tau2 - 1 (tau3={t3}, 2*tau2-1={2 * t2 - 1})")
    else:
        if not (t1 > 3 / 4):
            bad.append(f"3/4 < tau1 (tau1={t1})")
        if not (t1 <= 1):
            bad.append(f"tau1 <= 1 (tau1={t1})")
        if not (t2 > 1 / 2):
            bad.append(f"1/2 < tau2 (tau2={t2})")
        if not (t2 < 2 * t1 - 1):
            bad.append(f"tau2 < 2*tau1 - 1 (tau2={t2}, 2*tau1-1={2 * t1 - 1})")
    return FeasibilityReport(not bad, bad)


def convex_rate_exponent(t: ExponentTriple, p: float):
    """Exponent of the L1 suboptimality rate of the smoothed iterates.

    Exact for ``fractions.Fraction`` inputs.
    """
    t1, t2 = t.tau1, t.tau2
    taus = [t1, t2] if p == 1 else [t1, t2, t.tau3]
    if any(v is None for v in taus):
        raise ValueError("tau3 required when p > 1")
    if not all(0 < v <= 1 for v in taus):
        raise ValueError(f"exponents must lie in (0, 1], got {taus}")
    if any(a < b for a, b in zip(taus, taus[1:])):
        raise ValueError(f"exponents must be ordered tau1 >= tau2 >= tau3, got {taus}")
    if p == 1:
        return min(1 - t1, t1 - t2, 2 * t2 - t1)
    t3 = t.tau3
    return min(1 - t1, t1 - t2, 2 * t3 - t1, 2 * t2 - t1 - t3)


def convex_preset(p: float, epsilon=0, delta=0.5, zeta=0.5) -> ExponentTriple:
    """Exponents whose convex rate is (1 - epsilon) / 4 (p = 1) or / 8 (p > 1)."""
    if not (0 <= epsilon < 1):
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    if not (0 < delta < 1 and 0 < zeta < 1):
        raise ValueError("delta and zeta must lie in (0, 1)")
    if p == 1:
        return ExponentTriple((3 + epsilon) / 4, (1 + delta * epsilon) / 2)
    if delta < zeta:
        raise ValueError(f"need delta >= zeta, got delta={delta}, zeta={zeta}")
    return ExponentTriple((7 + epsilon) / 8, (3 + delta * epsilon) / 4, (1 + zeta * epsilon) / 2)


@dataclass(frozen=True)
class Preset:
    alpha: StepsizeSchedule
    beta: StepsizeSchedule
    gamma: Optional[StepsizeSchedule]
    exponents: ExponentTriple
    predicted_exponent: float


def strongly_convex_preset(p: float, sigma: float, epsilon: float = 0.0, delta: float = 0.5) -> Preset:
    """alpha_n = 1/(sigma n) with subharmonic beta (and gamma when p > 1).

    ``predicted_exponent`` is the exponent of the mean squared distance to the
    minimizer.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not (0 <= epsilon < 1):
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    if not (0 < delta < 1):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    alpha = StronglyConvexAlpha(sigma)
    if p == 1:
        tau2 = 2 / 3
        return Preset(alpha, Subharmonic(tau2), None, ExponentTriple(1.0, tau2), 2 / 3)
    tau2 = (3 + epsilon) / 4
    tau3 = (1 + delta * epsilon) / 2
    return Preset(
        alpha, Subharmonic(tau2), Subharmonic(tau3), ExponentTriple(1.0, tau2, tau3), (1 - epsilon) / 2
    )


def n0(tau2: float) -> int:
    """Iteration index past which the strongly convex rate bound is stated."""
    return math.ceil(1.0 / (1.0 - tau2 ** (1.0 / (tau2 + 1.0))))


@dataclass
class GeneratorReport:
    passed: bool
    n0: Optional[int]
    horizon: int
    # last index where a condition failed, with the condition name
    last_failure: Optional[tuple] = None


def check_generator_conditions(alpha, beta, gamma, sigma: float, horizon: int, K: float = 2.0) -> GeneratorReport:
    """Smallest n0 such that both rate-generator conditions hold for n0 <= n <= horizon.

    Condition one: sigma * alpha_n <= (K-1)/K * min(beta_{n-1}, gamma_{n-1}).
    Condition two: alpha_{n+1} * s_{n-1} <= alpha_n * s_n for s in (beta, gamma).
    """
    if horizon < 3:
        raise ValueError("horizon must be at least 3")
    if gamma is None:
        gamma = beta
    frac = (K - 1.0) / K
    last = None
    for n in range(2, horizon + 1):
        a_n, a_next = alpha(n), alpha(n + 1)
        ok1 = sigma * a_n <= frac * min(beta(n - 1), gamma(n - 1))
        ok2 = a_next * beta(n - 1) <= a_n * beta(n) and a_next * gamma(n - 1) <= a_n * gamma(n)
        if not ok1:
            last = (n, "step_vs_tracking")
        elif not ok2:
            last = (n, "ratio_monotone")
    if last is None:
        return GeneratorReport(True, 2, horizon)
    if last[0] == horizon:
        return GeneratorReport(False, None, horizon, last)
    return GeneratorReport(True, last[0] + 1, horizon, last)


def build(spec) -> StepsizeSchedule:
    """Construct a schedule from ``{"kind": ..., ...}``."""
    kind = spec.get("kind")
    if kind == "subharmonic":
        return Subharmonic(float(spec["tau"]), float(spec.get("initial", 1.0)))
    if kind == "strongly_convex_alpha":
        return StronglyConvexAlpha(float(spec["sigma"]))
    if kind == "constant":
        return Constant(float(spec["v"]))
    raise ValueError(f"unknown schedule kind {kind!r}")
