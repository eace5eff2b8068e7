"""Three-level stochastic subgradient method for mean-semideviation objectives.

Each iteration runs three coupled stochastic-approximation updates in
parallel: ``y`` tracks the mean cost, ``z`` tracks the p-th moment of the
regularized centered cost, and ``x`` takes a projected step along the
sampled gradient plus a risk correction. All three read the pre-update
state of the iteration.
"""

from __future__ import annotations

import csv
import io
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problems import STREAM_W1, STREAM_W2, Problem, stream
from .regularizers import RiskRegularizer, positive_part
from .schedules import StepsizeSchedule, Subharmonic

DRAW_BLOCK = 1024


class ConfigError(ValueError):
    """Solver configuration inconsistent with itself or with the problem."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class NonFiniteError(RuntimeError):
    def __init__(self, quantity: str, iteration: int, value):
        super().__init__(f"non-finite {quantity} at iteration {iteration}: {value!r}")
        self.quantity = quantity
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    alpha: StepsizeSchedule
    beta: StepsizeSchedule
    gamma: Optional[StepsizeSchedule] = None
    p: float = 1.0
    c: float = 0.0
    reg: RiskRegularizer = field(default_factory=positive_part)
    x0: Optional[object] = None
    y0: float = 0.0
    z0: float = 1.0
    horizon: int = 1000
    z_floor: float = 1e-12
    smoothing: bool = False
    # "buffer": explicit window of iterates; "prefix": prefix sums kept only where records need them
    smoothing_mode: str = "buffer"
    record_every: int = 1


def _bound_range(config: SolverConfig, problem: Problem):
    m_l, m_h = problem.bounds
    reg = config.reg
    eps = float(reg.value(m_l - m_h))
    big = float(reg.value(m_h - m_l))
    return m_l, m_h, eps ** config.p, big ** config.p


def validate_config(config: SolverConfig, problem: Problem) -> list:
    """Raise ConfigError on hard violations; return warnings for soft ones."""
    warnings = []
    if not (0.0 <= config.c <= 1.0):
        raise ConfigError(f"penalty c must lie in [0, 1] for the objective to be convex, got c={config.c}", "c")
    if not config.p >= 1.0 or not math.isfinite(config.p):
        raise ConfigError(f"semideviation order p must be a finite real >= 1, got p={config.p}", "p")
    if int(config.horizon) != config.horizon or config.horizon < 0:
        raise ConfigError(f"horizon must be a nonnegative integer, got {config.horizon}", "horizon")
    if int(config.record_every) != config.record_every or config.record_every < 1:
        raise ConfigError(f"record_every must be a positive integer, got {config.record_every}", "record_every")
    if not config.z_floor > 0:
        raise ConfigError(f"z_floor must be positive, got {config.z_floor}", "z_floor")
    if config.smoothing_mode not in ("buffer", "prefix"):
        raise ConfigError(f"smoothing_mode must be 'buffer' or 'prefix', got {config.smoothing_mode!r}", "smoothing_mode")
    if config.x0 is not None:
        x0 = np.atleast_1d(np.asarray(config.x0, dtype=float))
        if x0.shape != (problem.dimension,):
            raise ConfigError(f"x0 has shape {x0.shape}, problem dimension is {problem.dimension}", "x0")
        if not problem.feasible_set.contains(x0):
            raise ConfigError(f"x0={x0.tolist()} is not in the feasible set", "x0")
    if config.p > 1:
        if config.gamma is None:
            raise ConfigError("a gamma schedule is required when p > 1", "gamma")
        if problem.bounds is None or not all(math.isfinite(b) for b in problem.bounds):
            raise ConfigError(
                "p > 1 requires condition C4: the cost must have finite bounds m_l <= m_h over the "
                f"feasible set, but problem {problem.label!r} has none (unbounded noise support?)",
                "p",
            )
        m_l, m_h, eps_p, big_p = _bound_range(config, problem)
        eps = eps_p ** (1.0 / config.p)
        if not eps > config.z_floor ** (1.0 / config.p):
            raise ConfigError(
                f"p > 1 requires condition C4 with R(m_l - m_h) > 0, but R({m_l - m_h!r}) = {eps!r} "
                f"for regularizer {config.reg.label!r}; use slack_adjust(reg, eta) with eta > 0",
                "reg",
            )
        if not (m_l <= config.y0 <= m_h) and config.beta(0) != 1.0:
            warnings.append(f"y0={config.y0} outside [{m_l}, {m_h}] and beta_0 != 1: iterate bounds not guaranteed")
        if not (eps_p <= config.z0 <= big_p) and config.gamma(0) != 1.0:
            warnings.append(f"z0={config.z0} outside [{eps_p}, {big_p}] and gamma_0 != 1: iterate bounds not guaranteed")
    return warnings


class _Draws:
    """Fixed-size block draws from one stream, handed out one row at a time."""

    def __init__(self, rng, sampler, block=DRAW_BLOCK):
        self.rng = rng
        self.sampler = sampler
        self.block = block
        self.buf = None
        self.i = block

    def refill(self):
        self.buf = np.asarray(self.sampler(self.rng, self.block), dtype=float)
        self.i = 0

    def next(self):
        if self.i >= self.block:
            self.refill()
        row = self.buf[self.i]
        self.i += 1
        return row


@dataclass
class SolverState:
    x: np.ndarray
    y: float
    z: float
    n: int
    w1: _Draws
    w2: _Draws
    window: deque = field(default_factory=deque)
    window_sum: Optional[np.ndarray] = None
    z_clamps: int = 0


def initial_state(config: SolverConfig, problem: Problem, master_seed: int) -> SolverState:
    if config.x0 is None:
        x0 = problem.feasible_set.project(np.zeros(problem.dimension))
    else:
        x0 = np.atleast_1d(np.asarray(config.x0, dtype=float)).copy()
    z0 = 1.0 if config.p == 1 else float(config.z0)
    state = SolverState(
        x0, float(config.y0), z0, 0,
        _Draws(stream(master_seed, STREAM_W1), problem.sampler),
        _Draws(stream(master_seed, STREAM_W2), problem.sampler),
    )
    if config.smoothing and config.smoothing_mode == "buffer":
        state.window.append(x0)
        state.window_sum = x0.copy()
    return state


def risk_weight(delta, z, p: float, reg: RiskRegularizer, z_floor: float):
    """R'(delta) * R(delta)^(p-1) * max(z, z_floor)^((1-p)/p), with 0^0 = 1.

    Returns (weight, clamped) where ``clamped`` flags z below the floor.
    """
    slope = reg.subderivative(delta)
    if p == 1:
        return slope, False
    r = reg.value(delta)
    zt = np.maximum(z, z_floor)
    return slope * r ** (p - 1.0) * zt ** ((1.0 - p) / p), np.any(z < z_floor)


def search_direction(g1, g2, delta, z, config: SolverConfig):
    """g2 + c * (g2 - g1) * risk_weight; broadcasts over sample axes."""
    weight, _ = risk_weight(delta, z, config.p, config.reg, config.z_floor)
    return g2 + config.c * (g2 - g1) * np.expand_dims(weight, -1)


def advance(state: SolverState, config: SolverConfig, problem: Problem, w1, w2,
            a_n: Optional[float] = None, b_n: Optional[float] = None, g_n: Optional[float] = None) -> SolverState:
    """One iteration from explicit draws ``w1`` (level-one stream) and ``w2``."""
    n = state.n
    if a_n is None:
        a_n = config.alpha(n)
        b_n = config.beta(n)
        g_n = config.gamma(n) if config.gamma is not None else 1.0
    x, y, z = state.x, state.y, state.z
    p = config.p
    W = np.stack((np.asarray(w1, dtype=float), np.asarray(w2, dtype=float)))
    F = problem.cost(x, W)
    G = problem.subgradient(x, W)
    f1 = float(F[0])
    f2 = float(F[1])

    y_new = (1.0 - b_n) * y + b_n * f1
    delta = f2 - y
    reg = config.reg
    slope = float(reg.subderivative(delta))
    if p == 1:
        z_new = 1.0
        weight = slope
    else:
        r = float(reg.value(delta))
        z_new = (1.0 - g_n) * z + g_n * r ** p
        if z < config.z_floor:
            state.z_clamps += 1
            zt = config.z_floor
        else:
            zt = z
        weight = slope * r ** (p - 1.0) * zt ** ((1.0 - p) / p)
    g2 = G[1]
    if config.c != 0:
        correction = (g2 - G[0]) * weight
        step = g2 + config.c * correction
    else:
        correction = None
        step = g2
    x_new = problem.feasible_set.project(x - a_n * step)

    total = f1 + f2 + y_new + z_new + weight + float(np.sum(x_new))
    if not math.isfinite(total):
        _name_nonfinite(n, f1=f1, f2=f2, y=y_new, z=z_new, risk_weight=weight,
                        correction=None if correction is None else float(np.sum(correction)),
                        x=float(np.sum(x_new)))

    state.x, state.y, state.z, state.n = x_new, y_new, z_new, n + 1
    if state.window_sum is not None:
        _slide_window(state, x_new)
    return state


def _name_nonfinite(n, **quantities):
    labels = {"f1": "cost F(x, w1)", "f2": "cost F(x, w2)", "y": "y", "z": "z",
              "risk_weight": "risk weight", "correction": "risk correction", "x": "x"}
    for key, val in quantities.items():
        if val is not None and not math.isfinite(val):
            raise NonFiniteError(labels[key], n, val)
    raise NonFiniteError("iterate", n, math.nan)


def _slide_window(state: SolverState, x_new):
    # window holds x^i for i in [floor(n/2), n]
    n = state.n
    state.window.append(x_new)
    state.window_sum = state.window_sum + x_new
    while len(state.window) > n - n // 2 + 1:
        state.window_sum = state.window_sum - state.window.popleft()


def step(state: SolverState, config: SolverConfig, problem: Problem) -> SolverState:
    """Draw w1 and w2 from the state's two streams and advance one iteration."""
    w1 = state.w1.next()
    w2 = state.w2.next()
    return advance(state, config, problem, w1, w2)


def smoothed_iterate(state: SolverState) -> np.ndarray:
    """Sum of x^i for i = n - ceil(n/2) .. n, divided by ceil(n/2)."""
    n = state.n
    if n < 1:
        raise ValueError("smoothed iterate is undefined at n = 0")
    if state.window_sum is None:
        raise ValueError("smoothing was not enabled for this run")
    return state.window_sum / math.ceil(n / 2)


@dataclass
class RunRecord:
    n: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    xs: Optional[np.ndarray]
    seed: int
    iterations: int
    wall_time: float = 0.0
    violations: list = field(default_factory=list)
    z_clamps: int = 0
    warnings: list = field(default_factory=list)

    def csv_text(self) -> str:
        N = self.x.shape[1]
        header = ["n"] + [f"x_{i}" for i in range(N)] + ["y", "z"]
        if self.xs is not None:
            header += [f"xs_{i}" for i in range(N)]
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(header)
        for k in range(len(self.n)):
            row = [str(int(self.n[k]))] + [repr(float(v)) for v in self.x[k]]
            row += [repr(float(self.y[k])), repr(float(self.z[k]))]
            if self.xs is not None:
                row += [repr(float(v)) for v in self.xs[k]]
            out.writerow(row)
        return buf.getvalue()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


def _record_points(horizon: int, every: int) -> np.ndarray:
    return np.arange(0, horizon // every + 1) * every


def run(config: SolverConfig, problem: Problem, master_seed: int) -> RunRecord:
    """Execute ``config.horizon`` iterations and record every ``record_every``-th state."""
    warnings = validate_config(config, problem)
    started = time.perf_counter()
    state = initial_state(config, problem, master_seed)
    horizon, every = int(config.horizon), int(config.record_every)
    rows = _record_points(horizon, every)
    N = problem.dimension
    rec_x = np.empty((len(rows), N))
    rec_y = np.empty(len(rows))
    rec_z = np.empty(len(rows))
    rec_xs = np.full((len(rows), N), np.nan) if config.smoothing else None

    prefix = config.smoothing and config.smoothing_mode == "prefix"
    if prefix:
        # x-hat^n needs the prefix sum up to floor(n/2) - 1 and up to n
        wanted = {int(n) // 2 - 1 for n in rows if n >= 1}
        saved = {-1: np.zeros(N)}
        running = np.zeros(N)

    monitor = config.p > 1 and problem.bounds is not None
    if monitor:
        m_l, m_h, lo_z, hi_z = _bound_range(config, problem)
    violations = []

    def record(k):
        rec_x[k] = state.x
        rec_y[k] = state.y
        rec_z[k] = state.z
        if config.smoothing and state.n >= 1:
            if prefix:
                rec_xs[k] = (running - saved[state.n // 2 - 1]) / math.ceil(state.n / 2)
            else:
                rec_xs[k] = smoothed_iterate(state)

    if prefix:
        running = running + state.x
        if 0 in wanted:
            saved[0] = running.copy()
    record(0)
    k = 1
    gamma = config.gamma
    for start in range(0, horizon, DRAW_BLOCK):
        count = min(DRAW_BLOCK, horizon - start)
        A = config.alpha.block(start, count)
        B = config.beta.block(start, count)
        C = gamma.block(start, count) if gamma is not None else np.ones(count)
        for j in range(count):
            advance(state, config, problem, state.w1.next(), state.w2.next(), A[j], B[j], C[j])
            n = state.n
            if monitor:
                if not (m_l <= state.y <= m_h):
                    violations.append((n, "y", state.y))
                if not (lo_z <= state.z <= hi_z):
                    violations.append((n, "z", state.z))
            if prefix:
                running = running + state.x
                if n in wanted:
                    saved[n] = running.copy()
            if n % every == 0:
                record(k)
                k += 1
    return RunRecord(
        rows, rec_x, rec_y, rec_z, rec_xs, int(master_seed), horizon,
        time.perf_counter() - started, violations, state.z_clamps, warnings,
    )


def projected_sgd(problem: Problem, alpha: StepsizeSchedule, x0, horizon: int, master_seed: int) -> np.ndarray:
    """Plain projected stochastic subgradient descent driven by the second stream only.

    Returns the full x trajectory, shape (horizon + 1, N).
    """
    draws = _Draws(stream(master_seed, STREAM_W2), problem.sampler)
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    out = np.empty((horizon + 1, x.size))
    out[0] = x
    for n in range(horizon):
        w = draws.next()
        g = problem.subgradient(x, w)
        x = problem.feasible_set.project(x - alpha(n) * g)
        out[n + 1] = x
    return out


@dataclass
class BoundReport:
    passed: bool
    checked_rows: int
    violations: int = 0
    first_violation: Optional[tuple] = None
    note: str = ""


def monitor_boundedness(record: RunRecord, problem: Problem, config: SolverConfig) -> BoundReport:
    """Check recorded y and z against [m_l, m_h] and [R(m_l - m_h)^p, R(m_h - m_l)^p] for n >= 1."""
    if config.p == 1:
        return BoundReport(True, 0, note="iterate bounds only apply for p > 1")
    if problem.bounds is None:
        return BoundReport(False, 0, note="problem has no cost bounds")
    m_l, m_h, lo_z, hi_z = _bound_range(config, problem)
    rows = record.n >= 1
    bad_y = rows & ((record.y < m_l) | (record.y > m_h))
    bad_z = rows & ((record.z < lo_z) | (record.z > hi_z))
    bad = bad_y | bad_z
    count = int(bad.sum())
    first = None
    if count:
        i = int(np.flatnonzero(bad)[0])
        which = "y" if bad_y[i] else "z"
        first = (int(record.n[i]), which, float(record.y[i] if which == "y" else record.z[i]))
    return BoundReport(count == 0, int(rows.sum()), count, first)


def default_schedules(p: float):
    """Subharmonic schedules with exponents that satisfy the pathwise constraints."""
    if p == 1:
        return Subharmonic(1.0), Subharmonic(0.75), None
    return Subharmonic(1.0), Subharmonic(0.9), Subharmonic(0.7)
