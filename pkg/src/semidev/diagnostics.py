"""Monte-Carlo objective estimators, brute-force oracles and rate-slope fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .problems import Problem, stream
from .regularizers import RiskRegularizer

BOOTSTRAP_RESAMPLES = 200
# stream ids reserved for estimators, away from the solver's two streams
STREAM_ESTIMATE = 7
STREAM_BOOTSTRAP = 8


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    n_samples: int
    seed: int
    mean: float = math.nan
    dispersion: float = math.nan


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    n_range: tuple
    dropped: int = 0


def dispersion(samples: np.ndarray, reg: RiskRegularizer, p: float, center: float) -> float:
    """(mean R(Z - center)^p)^(1/p)."""
    r = np.asarray(reg.value(samples - center), dtype=float)
    if p == 1:
        return float(np.mean(r))
    return float(np.mean(r ** p)) ** (1.0 / p)


def empirical_risk(samples, reg: RiskRegularizer, p: float, c: float) -> float:
    """Plug-in mean-semideviation of a sample, centered at the sample mean."""
    samples = np.asarray(samples, dtype=float)
    mu = float(np.mean(samples))
    if c == 0:
        return mu
    return mu + c * dispersion(samples, reg, p, mu)


def bootstrap_std_error(samples, reg, p, c, resamples=BOOTSTRAP_RESAMPLES, rng=None) -> float:
    samples = np.asarray(samples, dtype=float)
    if rng is None:
        rng = np.random.default_rng(0)
    n = samples.size
    vals = np.empty(resamples)
    for b in range(resamples):
        vals[b] = empirical_risk(samples[rng.integers(0, n, n)], reg, p, c)
    return float(np.std(vals, ddof=1))


def sample_noise(problem: Problem, n_samples: int, seed: int) -> np.ndarray:
    return problem.sampler(stream(seed, STREAM_ESTIMATE), n_samples)


def estimate_objective(problem: Problem, reg: RiskRegularizer, p: float, c: float, x, n_samples: int,
                       seed: int, bootstrap: bool = True, noise=None) -> McEstimate:
    """Two-pass plug-in estimate of E F + c * ||R(F - E F)||_p at ``x``.

    ``noise`` overrides the sampled draws (used for common random numbers).
    """
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    if noise is None:
        noise = sample_noise(problem, n_samples, seed)
    F = np.asarray(problem.cost(np.atleast_1d(np.asarray(x, dtype=float)), noise), dtype=float)
    mu = float(np.mean(F))
    disp = dispersion(F, reg, p, mu)
    value = mu if c == 0 else mu + c * disp
    se = 0.0
    if bootstrap:
        se = bootstrap_std_error(F, reg, p, c, rng=stream(seed, STREAM_BOOTSTRAP))
    return McEstimate(value, se, int(F.size), int(seed), mu, disp)


def grid_oracle(problem: Problem, reg: RiskRegularizer, p: float, c: float, grid, n_samples: int, seed: int,
                return_values: bool = False):
    """Minimize the estimated objective over a finite grid with common random numbers.

    Ties go to the smallest grid index.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[:, None]
    if grid.shape[0] == 0:
        raise ValueError("grid must be nonempty")
    for g in grid:
        if not problem.feasible_set.contains(g):
            raise ValueError(f"grid point {g.tolist()} is not feasible")
    noise = sample_noise(problem, n_samples, seed)
    values = np.array([
        estimate_objective(problem, reg, p, c, g, n_samples, seed, bootstrap=False, noise=noise).value
        for g in grid
    ])
    best = int(np.argmin(values))
    if return_values:
        return grid[best], float(values[best]), values
    return grid[best], float(values[best])


def gradient_check(problem: Problem, config, x, n_samples: int, seed: int, h: float = 1e-4) -> dict:
    """Compare the averaged search direction at the plug-in (y, z) with a central difference.

    The direction is averaged over every (w1, w2) pair of one sample, which by
    linearity means replacing the level-one subgradient by its sample mean.
    The finite difference is taken on the plug-in objective with the same
    sample (common random numbers).
    """
    from .solver import search_direction

    x = np.atleast_1d(np.asarray(x, dtype=float))
    noise = sample_noise(problem, n_samples, seed)
    F = np.asarray(problem.cost(x, noise), dtype=float)
    G = np.asarray(problem.subgradient(x, noise), dtype=float)
    y = float(np.mean(F))
    z = float(np.mean(np.asarray(config.reg.value(F - y), dtype=float) ** config.p))
    g_mean = G.mean(axis=0)
    direction = search_direction(g_mean, G, F - y, z, config).mean(axis=0)

    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        up = empirical_risk(problem.cost(x + e, noise), config.reg, config.p, config.c)
        down = empirical_risk(problem.cost(x - e, noise), config.reg, config.p, config.c)
        fd[i] = (up - down) / (2.0 * h)
    rel = float(np.linalg.norm(direction - fd) / max(np.linalg.norm(fd), 1e-300))
    return {"direction": direction, "finite_difference": fd, "relative_error": rel, "y": y, "z": z}


@dataclass(frozen=True)
class ErrorRow:
    n: int
    mean_sq_error: float
    std_error: float


def estimate_solution_error(records: Sequence, x_star, checkpoints: Sequence[int], smoothed: bool = False) -> list:
    """Seed-averaged squared distance to ``x_star`` at each checkpoint."""
    if len(records) < 2:
        raise ValueError("need at least 2 records (seeds) to estimate a standard error")
    x_star = np.atleast_1d(np.asarray(x_star, dtype=float))
    table = []
    for n in checkpoints:
        errs = []
        for rec in records:
            if n > rec.iterations:
                raise ValueError(f"checkpoint {n} is beyond the horizon {rec.iterations}")
            hits = np.flatnonzero(rec.n == n)
            if hits.size == 0:
                raise ValueError(f"checkpoint {n} was not recorded")
            xs = rec.xs if smoothed else rec.x
            errs.append(float(np.sum((xs[hits[0]] - x_star) ** 2)))
        errs = np.asarray(errs)
        table.append(ErrorRow(int(n), float(errs.mean()), float(errs.std(ddof=1) / math.sqrt(errs.size))))
    return table


def log_checkpoints(lo: int, hi: int, count: int = 12, every: int = 1) -> list:
    """Roughly log-spaced checkpoints, rounded to multiples of ``every``."""
    raw = np.geomspace(lo, hi, count)
    pts = sorted({int(round(v / every)) * every for v in raw})
    return [p for p in pts if lo <= p <= hi]


def fit_loglog_slope(table, n_min: int = 1) -> SlopeFit:
    """Least-squares line through (log n, log error) for rows with n >= n_min."""
    rows = [(r.n, r.mean_sq_error) if isinstance(r, ErrorRow) else (r[0], r[1]) for r in table]
    rows = [r for r in rows if r[0] >= n_min]
    if len(rows) < 4:
        raise ValueError(f"need at least 4 checkpoints >= {n_min}, got {len(rows)}")
    ok = [r for r in rows if r[1] > 0]
    dropped = len(rows) - len(ok)
    if dropped and dropped >= 0.2 * len(rows):
        raise ValueError(f"{dropped} of {len(rows)} errors are nonpositive; cannot fit a log-log slope")
    if len(ok) < 2:
        raise ValueError("not enough positive errors to fit")
    ln = np.log([r[0] for r in ok])
    le = np.log([r[1] for r in ok])
    slope, intercept = np.polyfit(ln, le, 1)
    resid = le - (slope * ln + intercept)
    total = np.sum((le - le.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid ** 2) / total) if total > 0 else 1.0
    return SlopeFit(float(slope), float(intercept), min(max(r2, 0.0), 1.0), (int(ok[0][0]), int(ok[-1][0])), dropped)
