"""Command-line front end: ``semidev run|validate|newsvendor|rate <config.json>``.

Exit codes: 0 success, 1 configuration error, 2 runtime abort, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, diagnostics, problems, regularizers, schedules
from .solver import ConfigError, NonFiniteError, SolverConfig, run, validate_config

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3


class ConfigParseError(Exception):
    pass


# ------------------------------------------------------------------ parsing

def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigParseError(f"{path}: top level must be an object")
    return cfg


def _require(cfg, key, where="config"):
    if key not in cfg:
        raise ConfigParseError(f"field '{key}' missing from {where}")
    return cfg[key]


def _field(name, fn, *args):
    try:
        return fn(*args)
    except ConfigParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        detail = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ConfigParseError(f"field '{name}': {detail}") from exc


def exponents_of(alpha, beta, gamma):
    def tau(s):
        if isinstance(s, schedules.Subharmonic):
            return s.tau
        if isinstance(s, schedules.StronglyConvexAlpha):
            return 1.0
        return None

    t = [tau(alpha), tau(beta), tau(gamma) if gamma is not None else None]
    if t[0] is None or t[1] is None:
        return None
    return schedules.ExponentTriple(*t)


def build_schedules(spec: dict, p: float, problem):
    """Returns (alpha, beta, gamma, exponents, predicted_exponent)."""
    preset = spec.get("preset")
    if preset == "sc-eps":
        sigma = spec.get("sigma", problem.strong_convexity)
        if sigma is None:
            raise ConfigParseError("field 'schedule.sigma': problem has no strong convexity modulus; give sigma")
        pre = schedules.strongly_convex_preset(p, float(sigma), float(spec.get("epsilon", 0.0)),
                                               float(spec.get("delta", 0.5)))
        return pre.alpha, pre.beta, pre.gamma, pre.exponents, pre.predicted_exponent
    if preset == "convex-eps":
        eps = float(spec.get("epsilon", 0.0))
        t = schedules.convex_preset(p, eps, float(spec.get("delta", 0.5)), float(spec.get("zeta", 0.5)))
        gamma = schedules.Subharmonic(t.tau3) if t.tau3 is not None else None
        predicted = schedules.convex_rate_exponent(t, p)
        return schedules.Subharmonic(t.tau1), schedules.Subharmonic(t.tau2), gamma, t, predicted
    if preset is not None:
        raise ConfigParseError(f"field 'schedule.preset': unknown preset {preset!r} (expected 'sc-eps' or 'convex-eps')")
    if "exponents" in spec:
        taus = list(spec["exponents"]) + [None] * 3
        alpha = schedules.Subharmonic(float(taus[0]))
        beta = schedules.Subharmonic(float(taus[1]))
        gamma = schedules.Subharmonic(float(taus[2])) if taus[2] is not None else None
        return alpha, beta, gamma, exponents_of(alpha, beta, gamma), None
    alpha = _field("schedule.alpha", schedules.build, _require(spec, "alpha", "schedule"))
    beta = _field("schedule.beta", schedules.build, _require(spec, "beta", "schedule"))
    gamma = _field("schedule.gamma", schedules.build, spec["gamma"]) if "gamma" in spec else None
    return alpha, beta, gamma, exponents_of(alpha, beta, gamma), None


class Experiment:
    """A parsed configuration: problem, regularizer, solver config and run settings."""

    def __init__(self, cfg: dict, out_override=None):
        self.raw = cfg
        self.problem = _field("problem", problems.build, _require(cfg, "problem"))
        self.reg = _field("regularizer", regularizers.build, cfg.get("regularizer", {"name": "positive_part"}))
        self.p = _field("p", float, cfg.get("p", 1.0))
        self.c = _field("c", float, cfg.get("c", 0.0))
        sched = cfg.get("schedule", {"preset": "convex-eps"})
        self.alpha, self.beta, self.gamma, self.exponents, self.predicted = _field(
            "schedule", build_schedules, sched, self.p, self.problem)
        if self.p > 1 and self.gamma is None:
            self.gamma = schedules.Subharmonic(0.7)
        seeds = cfg.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
            raise ConfigParseError("field 'seeds': must be a nonempty list of integers")
        self.seeds = seeds
        self.out = Path(out_override or cfg.get("output", "out"))
        x0 = cfg.get("x0")
        self.config = _field("solver", SolverConfig,
                             self.alpha, self.beta, self.gamma, self.p, self.c, self.reg,
                             None if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float)),
                             float(cfg.get("y0", 0.0)), float(cfg.get("z0", 1.0)),
                             int(cfg.get("horizon", 1000)), float(cfg.get("z_floor", 1e-12)),
                             bool(cfg.get("smoothing", False)), str(cfg.get("smoothing_mode", "buffer")),
                             int(cfg.get("record_every", 1)))


# ------------------------------------------------------------------- output

class Output:
    def __init__(self, root: Path, quiet: bool):
        self.root = root
        self.quiet = quiet
        root.mkdir(parents=True, exist_ok=True)
        self.log_path = root / "run.log"

    def say(self, msg=""):
        if not self.quiet:
            print(msg)

    def log(self, msg):
        # the only place wall-clock time appears
        stamp = _dt.datetime.now().isoformat(timespec="seconds")
        with open(self.log_path, "a") as fh:
            fh.write(f"{stamp} {msg}\n")

    def write_csv(self, name, header, rows, provenance: dict):
        path = self.root / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        prov = path.with_suffix(".provenance.json")
        prov.write_text(json.dumps(provenance, indent=2, sort_keys=True, default=str) + "\n")
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _run_one(args):
    config, problem, seed = args
    return run(config, problem, seed)


def _run_seeds(exp: Experiment, workers: int):
    jobs = [(exp.config, exp.problem, s) for s in exp.seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def _provenance(exp: Experiment, **extra):
    d = {"config": exp.raw, "seeds": exp.seeds, "version": __version__}
    d.update(extra)
    return d


# ----------------------------------------------------------------- commands

def cmd_run(exp: Experiment, out: Output, workers: int = 1) -> int:
    validate_config(exp.config, exp.problem)
    records = _run_seeds(exp, workers)
    rows = []
    for rec in records:
        path = out.root / f"trajectory_seed{rec.seed}.csv"
        rec.to_csv(path)
        out.log(f"seed {rec.seed}: {rec.iterations} iterations in {rec.wall_time:.3f}s")
        for w in rec.warnings:
            out.log(f"seed {rec.seed} warning: {w}")
        final_xs = rec.xs[-1].tolist() if rec.xs is not None else [math.nan] * rec.x.shape[1]
        rows.append([rec.seed, rec.iterations] + rec.x[-1].tolist() + [rec.y[-1], rec.z[-1]] + final_xs
                    + [len(rec.violations), rec.z_clamps])
    N = exp.problem.dimension
    header = (["seed", "iterations"] + [f"x_{i}" for i in range(N)] + ["y", "z"]
              + [f"xs_{i}" for i in range(N)] + ["bound_violations", "z_clamps"])
    out.write_csv("summary.csv", header, rows, _provenance(exp))
    for r in rows:
        out.say(f"seed {r[0]}: x = {r[2:2 + N]}, violations = {r[-2]}, z clamps = {r[-1]}")
    return EXIT_OK


def validation_table(exp: Experiment, kappa_samples: int = 20_000) -> list:
    """Rows of (check, condition, passed, detail)."""
    rows = []
    grid = np.round(np.arange(-1000, 1001) * 0.01, 10)
    ax = regularizers.validate_axioms(exp.reg, grid, 1e-12)
    rows.append(("regularizer axioms", "nonneg, nondecreasing, nonexpansive, convex", ax.passed,
                 "all pass" if ax.passed else "failed: " + ", ".join(ax.failed())))
    rows.append(("penalty range", "c in [0, 1]", 0 <= exp.c <= 1, f"c = {exp.c}"))
    rows.append(("order range", "p >= 1", exp.p >= 1, f"p = {exp.p}"))
    if exp.exponents is not None:
        rep = schedules.check_pathwise_feasible(exp.exponents, exp.p)
        t = exp.exponents
        detail = f"taus = ({t.tau1}, {t.tau2}, {t.tau3})" if rep.feasible else "; ".join(rep.violations)
        rows.append(("stepsize exponents", "pathwise convergence constraints", rep.feasible, detail))
    else:
        rows.append(("stepsize exponents", "pathwise convergence constraints", True, "not subharmonic; skipped"))
    if exp.p > 1:
        bounds = exp.problem.bounds
        if bounds is None:
            rows.append(("cost bounds", "C4: finite m_l <= m_h", False, "problem cost is unbounded"))
        else:
            m_l, m_h = bounds
            eps = float(exp.reg.value(m_l - m_h))
            ok = eps > exp.config.z_floor ** (1.0 / exp.p)
            detail = f"m_l = {m_l!r}, m_h = {m_h!r}, R(m_l - m_h) = {eps!r}"
            if not ok:
                detail += "; hint: apply slack_adjust (regularizer 'slack': eta > 0)"
            rows.append(("cost bounds", "C4: R(m_l - m_h) > 0", ok, detail))
            if ok:
                E = float(exp.reg.value(m_h - m_l))
                y_ok = (m_l <= exp.config.y0 <= m_h) or exp.beta(0) == 1.0
                z_ok = (eps ** exp.p <= exp.config.z0 <= E ** exp.p) or exp.gamma(0) == 1.0
                rows.append(("initial values", "y0 in [m_l, m_h] or beta_0 = 1; z0 in range or gamma_0 = 1",
                             y_ok and z_ok, f"y0 = {exp.config.y0}, z0 = {exp.config.z0}"))
        kap = problems.check_kappa_condition(exp.problem, exp.reg, exp.p, kappa_samples, 5,
                                             problems.stream(exp.seeds[0], 9))
        rows.append(("differentiability", "P(F - E F <= kappa_R) < 1", kap.passed,
                     f"kappa = {kap.kappa}, max probability = {kap.max_probability:.4f}"))
    return rows


def cmd_validate(exp: Experiment, out: Output, workers: int = 1) -> int:
    rows = validation_table(exp)
    width = max(len(r[0]) for r in rows)
    cwidth = max(len(r[1]) for r in rows)
    print(f"{'check'.ljust(width)}  {'condition'.ljust(cwidth)}  result  detail")
    for name, cond, ok, detail in rows:
        print(f"{name.ljust(width)}  {cond.ljust(cwidth)}  {'PASS' if ok else 'FAIL'}    {detail}")
    return EXIT_OK if all(r[2] for r in rows) else EXIT_ACCEPTANCE


NEWSVENDOR_CASES = ("risk_neutral", "piecewise", "upper_semideviation")


def newsvendor_cases(exp: Experiment) -> dict:
    """The three comparison objectives as (regularizer, p, c) triples."""
    nv = exp.raw.get("newsvendor", {})
    params = exp.raw["problem"]["params"]
    c = float(nv.get("c", exp.c if exp.c > 0 else 0.5))
    p = float(nv.get("p", exp.p))
    piece = _field("newsvendor.piecewise", regularizers.newsvendor_piecewise,
                   float(nv.get("psi1", 0.2)), float(nv.get("psi2", 0.6)),
                   float(nv.get("t1", 0.1)), float(nv.get("t2", 0.3)), float(params["Ku"]))
    upper = regularizers.positive_part()
    slack = float(nv.get("slack", 0.0))
    if slack:
        piece = regularizers.slack_adjust(piece, slack)
        upper = regularizers.slack_adjust(upper, slack)
    return {
        "risk_neutral": (upper, p, 0.0),
        "piecewise": (piece, p, c),
        "upper_semideviation": (upper, p, c),
    }


def cmd_newsvendor(exp: Experiment, out: Output, workers: int = 1) -> int:
    if exp.raw.get("problem", {}).get("name") != "newsvendor":
        raise ConfigParseError("field 'problem.name': the newsvendor command needs a newsvendor problem")
    nv = exp.raw.get("newsvendor", {})
    cases = newsvendor_cases(exp)
    feasible = exp.problem.feasible_set
    step = float(nv.get("grid_step", 5e-3))
    hi = feasible.b if math.isfinite(feasible.b) else float(nv.get("grid_max", 10.0))
    grid = np.arange(0.0, hi + 0.5 * step, step)
    grid = grid[grid <= hi]
    n_samples = int(nv.get("oracle_samples", 100_000))
    oracle_seed = int(nv.get("oracle_seed", exp.seeds[0]))
    params = problems.build_newsvendor_params(exp.raw["problem"]["params"])
    closed = problems.newsvendor_closed_form(params)
    rows = []
    decisions = {}
    for name in NEWSVENDOR_CASES:
        reg, p, c = cases[name]
        cfg = SolverConfig(exp.alpha, exp.beta, exp.gamma, p, c, reg, exp.config.x0, exp.config.y0,
                           exp.config.z0, exp.config.horizon, exp.config.z_floor, True,
                           exp.config.smoothing_mode, exp.config.record_every)
        validate_config(cfg, exp.problem)
        finals = []
        for seed in exp.seeds:
            rec = run(cfg, exp.problem, seed)
            rec.to_csv(out.root / f"trajectory_{name}_seed{seed}.csv")
            out.log(f"{name} seed {seed}: {rec.wall_time:.3f}s")
            finals.append(float(rec.xs[-1, 0]))
        x_star, value = diagnostics.grid_oracle(exp.problem, reg, p, c, grid, n_samples, oracle_seed)
        decisions[name] = float(x_star[0])
        rows.append([name, float(np.mean(finals)), float(x_star[0]), value])
    out.write_csv("newsvendor_comparison.csv", ["case", "solver_x", "oracle_x", "oracle_value"], rows,
                  _provenance(exp, oracle_samples=n_samples, oracle_seed=oracle_seed,
                              grid={"start": 0.0, "stop": float(grid[-1]), "step": step},
                              closed_form_risk_neutral=closed))
    order = sorted(NEWSVENDOR_CASES, key=lambda k: decisions[k])
    out.say("case                 solver_x   oracle_x")
    for r in rows:
        out.say(f"{r[0]:<20} {r[1]:9.4f}  {r[2]:9.4f}")
    out.say(f"risk-neutral closed form: {closed:.4f}")
    out.say("ordering: " + " < ".join(f"{k} ({decisions[k]:.4f})" for k in order))
    return EXIT_OK


def cmd_rate(exp: Experiment, out: Output, workers: int = 1) -> int:
    rate = exp.raw.get("rate", {})
    if len(exp.seeds) < 10:
        raise ConfigParseError(f"field 'seeds': the rate command needs at least 10 seeds, got {len(exp.seeds)}")
    if exp.exponents is not None:
        rep = schedules.check_pathwise_feasible(exp.exponents, exp.p)
        if not rep.feasible:
            raise ConfigParseError("field 'schedule': infeasible stepsize exponents: " + "; ".join(rep.violations))
    if "x_star" not in rate:
        raise ConfigParseError("field 'rate.x_star' missing: the rate command needs a known minimizer")
    x_star = np.atleast_1d(np.asarray(rate["x_star"], dtype=float))
    theory = rate.get("theory", exp.predicted)
    if theory is None:
        raise ConfigParseError("field 'rate.theory' missing and the schedule is not a preset")
    theory = float(theory)
    slack = float(rate.get("slack", 0.25))
    validate_config(exp.config, exp.problem)
    every = exp.config.record_every
    lo = int(rate.get("n_lo", 100))
    hi = int(rate.get("n_hi", exp.config.horizon))
    pts = rate.get("checkpoints") or diagnostics.log_checkpoints(lo, hi, int(rate.get("count", 12)), every)
    records = _run_seeds(exp, workers)
    table = diagnostics.estimate_solution_error(records, x_star, pts, smoothed=bool(rate.get("smoothed", False)))
    n_min = max(lo, schedules.n0(exp.exponents.tau2) if exp.exponents is not None else 1)
    fit = diagnostics.fit_loglog_slope(table, n_min)
    passed = fit.slope <= -(theory - slack)
    out.write_csv("rate_table.csv", ["n", "mean_sq_error", "std_error"],
                  [[r.n, r.mean_sq_error, r.std_error] for r in table], _provenance(exp, x_star=x_star.tolist()))
    out.write_csv("rate_summary.csv", ["slope", "intercept", "r_squared", "theory_exponent", "threshold", "passed"],
                  [[fit.slope, fit.intercept, fit.r_squared, theory, -(theory - slack), passed]], _provenance(exp))
    out.say(f"fitted slope {fit.slope:.4f} (theory {-theory:.4f}, threshold {-(theory - slack):.4f}): "
            f"{'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_ACCEPTANCE


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "newsvendor": cmd_newsvendor, "rate": cmd_rate}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="semidev", description="Risk-averse stochastic subgradient experiments")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config")
    ap.add_argument("--out", default=None, help="output directory (overrides the config)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--quiet", action="store_true")
    args = ap.parse_args(argv)
    try:
        exp = Experiment(load_config(args.config), args.out)
        out = Output(exp.out, args.quiet)
        return COMMANDS[args.command](exp, out, max(1, args.workers))
    except (ConfigParseError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteError, RuntimeError, FloatingPointError) as exc:
        print(f"runtime abort: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
