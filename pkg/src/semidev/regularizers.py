"""Risk regularizers: convex, nonnegative, nondecreasing, nonexpansive scalar maps.

Every regularizer carries a value map, a right-derivative selection, the list of
points where it is not differentiable, and (when known in closed form) the level
``sup{x : R(x) = 0}`` used by the differentiability check of the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special


@dataclass(frozen=True)
class RiskRegularizer:
    value: Callable
    subderivative: Callable
    kink_points: tuple = ()
    label: str = "custom"
    # sup{x : value(x) = 0}; None means "find it numerically"
    zero_level: Optional[float] = None

    def __call__(self, x):
        return self.value(x)


# ---------------------------------------------------------------- built-ins

def _positive_value(x):
    return np.maximum(x, 0.0)


def _positive_slope(x):
    return np.where(np.asarray(x) >= 0.0, 1.0, 0.0)


def positive_part() -> RiskRegularizer:
    return RiskRegularizer(_positive_value, _positive_slope, (0.0,), "positive_part", 0.0)


def _entropic_value(x, t):
    # logaddexp(0, tx) = log(1 + exp(tx)) without overflow
    return np.logaddexp(0.0, t * np.asarray(x, dtype=float)) / t


def _entropic_slope(x, t):
    return special.expit(t * np.asarray(x, dtype=float))


def entropic(t: float) -> RiskRegularizer:
    """Softplus with temperature ``t``; its derivative is the logistic function."""
    t = float(t)
    if not (t > 0 and math.isfinite(t)):
        raise ValueError(f"entropic temperature must be positive and finite, got {t}")
    return RiskRegularizer(
        partial(_entropic_value, t=t), partial(_entropic_slope, t=t), (), f"entropic(t={t!r})", -math.inf
    )


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _ga_value(x):
    x = np.asarray(x, dtype=float)
    out = x * special.ndtr(x) + _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    # cancellation deep in the left tail can leave tiny negative residue
    return np.maximum(out, 0.0)


def _ga_slope(x):
    return special.ndtr(np.asarray(x, dtype=float))


def gaussian_antiderivative() -> RiskRegularizer:
    """x * Phi(x) + phi(x): the antiderivative of the standard normal cdf."""
    return RiskRegularizer(_ga_value, _ga_slope, (), "gaussian_antiderivative", -math.inf)


def _nv_value(x, psi1, psi2, k1, k2):
    x = np.asarray(x, dtype=float)
    return np.where(
        x <= 0.0,
        0.0,
        np.where(
            x <= k1,
            psi1 * x,
            np.where(x <= k2, psi2 * x + (psi1 - psi2) * k1, x + (psi2 - 1.0) * k2 + (psi1 - psi2) * k1),
        ),
    )


def _nv_slope(x, psi1, psi2, k1, k2):
    x = np.asarray(x, dtype=float)
    return np.where(x < 0.0, 0.0, np.where(x < k1, psi1, np.where(x < k2, psi2, 1.0)))


def newsvendor_piecewise(psi1: float, psi2: float, t1: float, t2: float, Ku: float) -> RiskRegularizer:
    """Four-piece linear regularizer with slopes 0, psi1, psi2, 1 and breakpoints 0, Ku*t1, Ku*t2."""
    if not (0.0 <= psi1 <= psi2 <= 1.0):
        raise ValueError(f"slopes must satisfy 0 <= psi1 <= psi2 <= 1, got psi1={psi1}, psi2={psi2}")
    if not (0.0 < t1 < t2):
        raise ValueError(f"thresholds must satisfy 0 < t1 < t2, got t1={t1}, t2={t2}")
    if not Ku > 0:
        raise ValueError(f"Ku must be positive, got {Ku}")
    k1, k2 = Ku * t1, Ku * t2
    if psi1 > 0:
        zero = 0.0
    elif psi2 > 0:
        zero = k1
    else:
        zero = k2
    kw = dict(psi1=float(psi1), psi2=float(psi2), k1=float(k1), k2=float(k2))
    return RiskRegularizer(
        partial(_nv_value, **kw),
        partial(_nv_slope, **kw),
        (0.0, float(k1), float(k2)),
        f"newsvendor_piecewise(psi1={psi1!r}, psi2={psi2!r}, t1={t1!r}, t2={t2!r}, Ku={Ku!r})",
        zero,
    )


def _shifted(x, base, eta):
    return base(x) + eta


def slack_adjust(base: RiskRegularizer, eta: float) -> RiskRegularizer:
    """Shift a regularizer up by ``eta`` so that it never vanishes (when eta > 0)."""
    if not eta >= 0:
        raise ValueError(f"slack eta must be nonnegative, got {eta}")
    if eta == 0:
        zero = base.zero_level
    else:
        zero = -math.inf
    return RiskRegularizer(
        partial(_shifted, base=base.value, eta=float(eta)),
        base.subderivative,
        base.kink_points,
        f"slack({base.label}, eta={eta!r})",
        zero,
    )


# ------------------------------------------------------ cdf representation

@dataclass(frozen=True)
class CdfSpec:
    cdf: Callable
    scale: float = 1.0
    intercept: float = 0.0
    quadrature_step: float = 1e-3
    # None: walk left until the cdf drops under tail_tol
    left_truncation: Optional[float] = None
    tail_tol: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.scale <= 1.0):
            raise ValueError(f"scale C_S must lie in (0, 1], got {self.scale}")
        if not self.intercept >= 0.0:
            raise ValueError(f"intercept C_I must be nonnegative, got {self.intercept}")
        if not self.quadrature_step > 0.0:
            raise ValueError(f"quadrature_step must be positive, got {self.quadrature_step}")


def _eval_cdf(cdf, x):
    x = np.asarray(x, dtype=float)
    out = np.asarray(cdf(x), dtype=float)
    if out.shape != x.shape:
        out = np.broadcast_to(out, x.shape).astype(float)
    return out


def _left_limit(cdf, x):
    return _eval_cdf(cdf, np.nextafter(x, -np.inf))


_MAX_REACH = 2.0**20


class _CdfIntegral:
    """Running trapezoid integral of a cdf on nodes k*h, evaluated anywhere.

    Each cell uses the cdf value at its left node and the left limit at its
    right node, so piecewise-constant cdfs with jumps on nodes integrate
    exactly.
    """

    def __init__(self, cdf, h, left, right):
        self.cdf = cdf
        self.h = h
        k0 = math.floor(left / h)
        k1 = math.ceil(right / h)
        self.k0 = k0
        nodes = np.arange(k0, k1 + 1, dtype=float) * h
        self.nodes = nodes
        at = _eval_cdf(cdf, nodes)
        lim = _left_limit(cdf, nodes)
        cells = 0.5 * (at[:-1] + lim[1:]) * np.diff(nodes)
        self.at = at
        self.cum = np.concatenate(([0.0], np.cumsum(cells)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        nodes = self.nodes
        idx = np.clip(np.floor(x / self.h).astype(np.int64) - self.k0, 0, len(nodes) - 1)
        # floor(x/h) can land one cell off by rounding
        idx = np.where((idx > 0) & (nodes[idx] > x), idx - 1, idx)
        idx = np.where((idx < len(nodes) - 1) & (nodes[np.minimum(idx + 1, len(nodes) - 1)] <= x), idx + 1, idx)
        base = nodes[idx]
        dx = x - base
        partial_cell = 0.5 * (self.at[idx] + _left_limit(self.cdf, x)) * dx
        out = self.cum[idx] + partial_cell
        # nothing accumulated left of the truncation point
        return np.where(x <= nodes[0], 0.0, out)


def _find_tails(cdf, tol, left=None):
    if left is None:
        left = -1.0
        while _eval_cdf(cdf, left) >= tol:
            left *= 2.0
            if -left > _MAX_REACH:
                raise ValueError(
                    "cdf does not decay on the left; the antiderivative integral diverges"
                )
    right = 1.0
    while _eval_cdf(cdf, right) < 1.0 - tol:
        right *= 2.0
        if right > _MAX_REACH:
            raise ValueError("cdf does not approach 1 on the right")
    return left, right


def _cdfa_value(x, integral, scale, intercept):
    return scale * integral(x) + intercept


def _cdfa_slope(x, cdf, scale):
    return scale * _eval_cdf(cdf, x)


def from_cdf(spec: CdfSpec) -> RiskRegularizer:
    """Build R(x) = C_S * int_{-inf}^x cdf(y) dy + C_I by trapezoid quadrature."""
    left, right = _find_tails(spec.cdf, spec.tail_tol, spec.left_truncation)
    if left >= right:
        right = left + 1.0
    integral = _CdfIntegral(spec.cdf, spec.quadrature_step, left, right)
    if spec.intercept > 0:
        zero = -math.inf
    else:
        zero = None
    return RiskRegularizer(
        partial(_cdfa_value, integral=integral, scale=spec.scale, intercept=spec.intercept),
        partial(_cdfa_slope, cdf=spec.cdf, scale=spec.scale),
        (),
        "from_cdf",
        zero,
    )


def _scaled_slope(x, slope, scale):
    return np.clip(np.asarray(slope(x), dtype=float) / scale, 0.0, 1.0)


def extract_cdf(reg: RiskRegularizer, grid: Sequence[float], quadrature_step: float = 1e-3) -> CdfSpec:
    """Recover (cdf, C_S, C_I) from a regularizer, relative to a finite grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    slopes = np.asarray(reg.subderivative(grid), dtype=float)
    scale = float(np.max(slopes))
    if not scale > 0:
        raise ValueError("regularizer is constant on the grid (C_S = 0); widen the grid")
    intercept = float(np.min(reg.value(grid)))
    return CdfSpec(
        partial(_scaled_slope, slope=reg.subderivative, scale=scale),
        min(scale, 1.0),
        max(intercept, 0.0),
        quadrature_step,
    )


# ------------------------------------------------------------- validators

@dataclass
class AxiomCheck:
    name: str
    passed: bool
    first_violation: Optional[tuple] = None


@dataclass
class AxiomReport:
    label: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]


def _first_pair(mask, xi, xj):
    hits = np.argwhere(mask)
    if hits.size == 0:
        return None
    i, j = hits[0]
    return (float(xi[i]), float(xj[j]))


def validate_axioms(reg: RiskRegularizer, grid: Sequence[float], tol: float = 1e-12, chunk: int = 256) -> AxiomReport:
    grid = np.sort(np.asarray(grid, dtype=float))
    if grid.size < 3:
        raise ValueError("axiom validation needs at least 3 grid points")
    vals = np.asarray(reg.value(grid), dtype=float)
    slopes = np.asarray(reg.subderivative(grid), dtype=float)

    report = AxiomReport(reg.label)
    neg = np.flatnonzero(vals < -tol)
    report.checks.append(AxiomCheck("nonnegative", neg.size == 0, (float(grid[neg[0]]),) if neg.size else None))

    mono = nonexp = convex = None
    for start in range(0, grid.size, chunk):
        xi = grid[start:start + chunk]
        vi = vals[start:start + chunk]
        upper = np.arange(start, start + xi.size)[:, None] < np.arange(grid.size)[None, :]
        if mono is None:
            bad = upper & (vals[None, :] < vi[:, None] - tol)
            mono = _first_pair(bad, xi, grid)
        if nonexp is None:
            bad = np.abs(vals[None, :] - vi[:, None]) > np.abs(grid[None, :] - xi[:, None]) + tol
            nonexp = _first_pair(bad, xi, grid)
        if convex is None:
            mid = 0.5 * (xi[:, None] + grid[None, :])
            vm = np.asarray(reg.value(mid), dtype=float)
            bad = vm > 0.5 * (vi[:, None] + vals[None, :]) + tol
            convex = _first_pair(bad, xi, grid)
    report.checks.append(AxiomCheck("nondecreasing", mono is None, mono))
    report.checks.append(AxiomCheck("nonexpansive", nonexp is None, nonexp))
    report.checks.append(AxiomCheck("midpoint_convex", convex is None, convex))

    out = np.flatnonzero((slopes < -tol) | (slopes > 1.0 + tol))
    report.checks.append(
        AxiomCheck("subderivative_in_unit_interval", out.size == 0, (float(grid[out[0]]),) if out.size else None)
    )
    drop = np.flatnonzero(np.diff(slopes) < -tol)
    report.checks.append(
        AxiomCheck("subderivative_nondecreasing", drop.size == 0, (float(grid[drop[0] + 1]),) if drop.size else None)
    )
    return report


def zero_level(reg: RiskRegularizer, reach: float = 1e6, iters: int = 200) -> float:
    """sup{x : R(x) = 0}, or -inf when R never vanishes on [-reach, reach]."""
    if reg.zero_level is not None:
        return reg.zero_level
    lo = -1.0
    while float(reg.value(lo)) != 0.0:
        lo *= 2.0
        if -lo > reach:
            return -math.inf
    hi = 1.0
    while float(reg.value(hi)) == 0.0:
        hi *= 2.0
        if hi > reach:
            return math.inf
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if float(reg.value(mid)) == 0.0:
            lo = mid
        else:
            hi = mid
    return lo


BUILTIN = {
    "positive_part": positive_part,
    "entropic": entropic,
    "gaussian_antiderivative": gaussian_antiderivative,
    "newsvendor_piecewise": newsvendor_piecewise,
}


def build(spec: dict) -> RiskRegularizer:
    """Construct a regularizer from ``{"name": ..., "params": {...}, "slack": eta}``."""
    spec = dict(spec)
    name = spec.get("name")
    if name not in BUILTIN:
        raise ValueError(f"unknown regularizer {name!r}; expected one of {sorted(BUILTIN)}")
    reg = BUILTIN[name](**spec.get("params", {}))
    if spec.get("slack"):
        reg = slack_adjust(reg, float(spec["slack"]))
    return reg
