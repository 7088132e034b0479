"""Command-line entry point: config parsing, experiment drivers, artifacts.

Subcommands: dre, are, enkf, enkf-nl, pg, compare, cartpole, mse-scaling.
All numeric outputs are CSV (17 significant digits, byte-deterministic for
a fixed config) plus a manifest.json per run listing exactly the files
written and the wall-clock per phase.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, baselines, bench, csvio, enkf, policy, riccati
from .errors import Diverged, DualEnkfError, ParseError, ValidationError
from .model import (
    ExperimentConfig,
    LinearQuadraticProblem,
    TimeGrid,
    linear_as_oracle,
    problem_from_json,
    validate_lq,
)

PROBLEM_SEED = 42  # generation seed for the random canonical benchmark
DEFAULT_SWEEP = [50, 100, 200, 400, 800, 1600]
DEFAULT_CARTPOLE_PARTICLES = [10, 100, 1000]
CARTPOLE_X0 = np.array([0.25 * math.pi, -0.1, 0.0, 0.0])  # deviation coordinates

_TOP_KEYS = {
    "benchmark",
    "d",
    "T",
    "dt",
    "N",
    "seeds",
    "jitter_scale",
    "are_tol",
    "pg",
    "out_dir",
    "problem",
}
_PG_KEYS = {
    "alpha",
    "r",
    "N_g",
    "iterations",
    "time_budget_s",
    "metric_samples",
    "target_error",
    "T",
    "dt",
}
_BENCHMARKS = {"random_canonical", "msd", "cartpole", "custom"}

# Comparison-table hyper-parameters, keyed by method and dimension.
_PG_TABLE_R = {
    "pg_ct": {2: 1e-1, 4: 1e-1, 10: 1e-3},
    "pg_dt": {2: 1e-1, 4: 1e-1, 10: 1e-1},
}


@dataclass
class RunSettings:
    benchmark: str
    grid: TimeGrid
    particles: object  # int or list[int]
    seeds: list[int]
    jitter_scale: float
    are_tol: float
    pg: dict
    out_dir: str
    d: int | None = None
    problem_doc: dict | None = None
    raw: dict = field(default_factory=dict)

    def experiment_config(self, seed: int, num_particles: int) -> ExperimentConfig:
        return ExperimentConfig(
            grid=self.grid,
            num_particles=num_particles,
            seed=seed,
            jitter_scale=self.jitter_scale,
            are_tol=self.are_tol,
        )

    def linear_problem(self) -> LinearQuadraticProblem:
        if self.benchmark == "random_canonical":
            return bench.random_canonical(self.d, PROBLEM_SEED)
        if self.benchmark == "msd":
            return bench.mass_spring_damper(self.d)
        if self.benchmark == "cartpole":
            return bench.cart_pole()[1]
        return problem_from_json(json.dumps(self.problem_doc))


def parse_config(path, seed_override=None) -> RunSettings:
    """Load and validate the JSON experiment config; rejects unknown keys."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"config {path} is not valid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            line=exc.lineno,
            column=exc.colno,
        ) from exc

    problems = []
    if not isinstance(doc, dict):
        raise ValidationError(["config root must be a JSON object"])
    for key in doc:
        if key not in _TOP_KEYS:
            problems.append(f"unknown key {key!r}")

    benchmark = doc.get("benchmark")
    if benchmark is None:
        problems.append("benchmark required")
    elif benchmark not in _BENCHMARKS:
        problems.append(f"benchmark must be one of {sorted(_BENCHMARKS)}")

    d = doc.get("d")
    if benchmark in ("random_canonical", "msd"):
        if d is None:
            problems.append("d required")
        elif not isinstance(d, int) or d < 1:
            problems.append("d must be a positive integer")
        elif benchmark == "msd" and d % 2 != 0:
            problems.append("d must be even for the msd benchmark")
    if benchmark == "cartpole":
        d = 4
    if benchmark == "custom" and "problem" not in doc:
        problems.append("problem required for the custom benchmark")
    if "problem" in doc and benchmark != "custom":
        problems.append("problem key is only valid with benchmark=custom")

    T = doc.get("T")
    if T is None:
        problems.append("T required")
    elif not isinstance(T, (int, float)) or T <= 0:
        problems.append("T must be positive")
    dt = doc.get("dt")
    if dt is None:
        problems.append("dt required")
    elif not isinstance(dt, (int, float)) or dt <= 0:
        problems.append("dt must be positive")

    particles = doc.get("N")
    if particles is None:
        problems.append("N required")
    elif isinstance(particles, int):
        if particles < 2:
            problems.append("N must be at least 2")
    elif isinstance(particles, list):
        if not particles or not all(isinstance(n, int) and n >= 2 for n in particles):
            problems.append("N list entries must be integers >= 2")
    else:
        problems.append("N must be an integer or a list of integers")

    seeds = doc.get("seeds", 1)
    if not isinstance(seeds, int) or seeds < 1:
        problems.append("seeds must be a positive integer")

    jitter_scale = doc.get("jitter_scale", 1e-8)
    if not isinstance(jitter_scale, (int, float)) or jitter_scale < 0:
        problems.append("jitter_scale must be nonnegative")
    are_tol = doc.get("are_tol", 1e-6)
    if not isinstance(are_tol, (int, float)) or are_tol <= 0:
        problems.append("are_tol must be positive")

    pg = doc.get("pg", {})
    if not isinstance(pg, dict):
        problems.append("pg must be an object")
        pg = {}
    else:
        for key in pg:
            if key not in _PG_KEYS:
                problems.append(f"unknown pg key {key!r}")

    grid = None
    if not problems:
        try:
            grid = TimeGrid(T=float(T), dt=float(dt))
        except ValidationError as exc:
            problems.extend(exc.violations)
    if problems:
        raise ValidationError(problems)

    base_seed = 0 if seed_override is None else int(seed_override)
    return RunSettings(
        benchmark=benchmark,
        grid=grid,
        particles=particles,
        seeds=[base_seed + i for i in range(seeds)],
        jitter_scale=float(jitter_scale),
        are_tol=float(are_tol),
        pg=dict(pg),
        out_dir=doc.get("out_dir", "out"),
        d=d,
        problem_doc=doc.get("problem"),
        raw=doc,
    )


class _Manifest:
    def __init__(self, command, settings: RunSettings, out_dir):
        self.doc = {
            "command": command,
            "version": __version__,
            "config": settings.raw,
            "seeds": settings.seeds,
            "phases": {},
            "outputs": [],
            "per_seed": [],
        }
        self.out_dir = out_dir

    def add_output(self, path):
        self.doc["outputs"].append(os.path.basename(path))
        return path

    def write(self):
        path = os.path.join(self.out_dir, "manifest.json")
        csvio.write_json(path, self.doc)
        return path


class _Phase:
    """Accumulates wall-clock per named phase, excluding I/O from solve time."""

    def __init__(self, manifest):
        self.manifest = manifest

    def __call__(self, name):
        return _PhaseTimer(self.manifest.doc["phases"], name)


class _PhaseTimer:
    def __init__(self, phases, name):
        self.phases = phases
        self.name = name

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        elapsed = time.perf_counter() - self.start
        self.phases[self.name] = self.phases.get(self.name, 0.0) + elapsed
        return False


def _map_seeds(fn, seeds, threads):
    if threads <= 1:
        return {seed: fn(seed) for seed in seeds}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(fn, seeds))
    return dict(zip(seeds, results))


def _stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def cmd_dre(settings: RunSettings, threads: int) -> dict:
    problem = settings.linear_problem()
    validate_lq(problem)
    manifest = _Manifest("dre", settings, settings.out_dir)
    phase = _Phase(manifest)
    with phase("solve"):
        schedule = riccati.solve_dre(problem, settings.grid)
    with phase("write"):
        manifest.add_output(
            csvio.write_schedule_csv(
                os.path.join(settings.out_dir, "dre.csv"), settings.grid, schedule.P
            )
        )
        manifest.write()
    return manifest.doc


def cmd_are(settings: RunSettings, threads: int) -> dict:
    problem = settings.linear_problem()
    validate_lq(problem)
    manifest = _Manifest("are", settings, settings.out_dir)
    phase = _Phase(manifest)
    with phase("solve"):
        P_inf = riccati.solve_are(problem, are_tol=settings.are_tol)
        residual = riccati.are_residual(problem, P_inf)
    d = problem.state_dim
    with phase("write"):
        header = csvio.matrix_columns("P", d, d) + ["residual"]
        manifest.add_output(
            csvio.write_csv(
                os.path.join(settings.out_dir, "are.csv"),
                header,
                [list(P_inf.ravel()) + [residual]],
            )
        )
        manifest.doc["residual"] = residual
        manifest.write()
    return manifest.doc


def _offline_problem(settings: RunSettings, oracle_path: bool):
    """The problem object handed to run_offline, and the linear reference."""
    linear = settings.linear_problem()
    validate_lq(linear)
    if not oracle_path:
        return linear, linear
    if settings.benchmark == "cartpole":
        return bench.cart_pole()[0], linear
    return linear_as_oracle(linear), linear


def _run_enkf_command(settings: RunSettings, threads: int, oracle_path: bool) -> dict:
    if settings.benchmark == "cartpole" and not oracle_path:
        return _cartpole_pipeline(settings, threads)
    if not isinstance(settings.particles, int):
        raise ValidationError(["N must be a single integer for this command"])

    problem, linear = _offline_problem(settings, oracle_path)
    name = "enkf-nl" if oracle_path else "enkf"
    manifest = _Manifest(name, settings, settings.out_dir)
    phase = _Phase(manifest)

    with phase("solve"):
        reference = riccati.solve_dre(linear, settings.grid)
        results = _map_seeds(
            lambda seed: enkf.run_offline(
                problem, settings.experiment_config(seed, settings.particles)
            ),
            settings.seeds,
            threads,
        )
        mses = {
            seed: bench.relative_mse(results[seed], reference) for seed in settings.seeds
        }
        gains = {
            seed: policy.gain_from_ensemble(results[seed].P[0], linear)
            for seed in settings.seeds
        }

    with phase("write"):
        manifest.add_output(
            csvio.write_multi_schedule_csv(
                os.path.join(settings.out_dir, "enkf_schedules.csv"),
                settings.grid,
                {seed: results[seed].P for seed in settings.seeds},
            )
        )
        manifest.add_output(
            csvio.write_schedule_csv(
                os.path.join(settings.out_dir, "dre.csv"), settings.grid, reference.P
            )
        )
        manifest.add_output(
            csvio.write_csv(
                os.path.join(settings.out_dir, "mse_summary.csv"),
                ["seed", "mse"],
                [[seed, mses[seed]] for seed in settings.seeds],
            )
        )
        pole_rows = []
        open_poles, _ = bench.pole_report(linear, np.zeros_like(gains[settings.seeds[0]]))
        for z in open_poles:
            pole_rows.append([z.real, z.imag, "open", -1])
        for seed in settings.seeds:
            _, closed = bench.pole_report(linear, gains[seed])
            for z in closed:
                pole_rows.append([z.real, z.imag, "closed", seed])
        manifest.add_output(
            csvio.write_csv(
                os.path.join(settings.out_dir, "poles.csv"),
                ["re", "im", "loop_type", "seed"],
                pole_rows,
            )
        )
        manifest.doc["per_seed"] = [
            {
                "seed": seed,
                "mse": mses[seed],
                "jitter_events": results[seed].jitter_events,
            }
            for seed in settings.seeds
        ]
        manifest.doc["mse_mean"] = float(np.mean(list(mses.values())))
        manifest.doc["mse_stderr"] = _stderr(list(mses.values()))
        manifest.write()
    return manifest.doc


def cmd_enkf(settings: RunSettings, threads: int) -> dict:
    return _run_enkf_command(settings, threads, oracle_path=False)


def cmd_enkf_nl(settings: RunSettings, threads: int) -> dict:
    return _run_enkf_command(settings, threads, oracle_path=True)


def _pg_defaults(settings: RunSettings, method: str, problem) -> dict:
    d = problem.state_dim
    table_r = _PG_TABLE_R[method]
    r_default = table_r.get(d, 1e-3 if (method == "pg_ct" and d >= 10) else 1e-1)
    pg = settings.pg
    T = float(pg.get("T", settings.grid.T))
    dt = float(pg.get("dt", settings.grid.dt))
    return {
        "alpha": float(pg.get("alpha", 1e-4)),
        "r": float(pg.get("r", r_default)),
        "N_g": int(pg.get("N_g", d)),
        "iterations": int(pg.get("iterations", 500)),
        "time_budget_s": float(pg.get("time_budget_s", 120.0)),
        "metric_samples": int(pg.get("metric_samples", 100)),
        "target_error": float(pg.get("target_error", 0.1)),
        "grid": TimeGrid(T=T, dt=dt),
    }


def _metric_config(problem, params, seed) -> baselines.PGConfig:
    """Shared-seed cost-evaluation config: x0 ~ N(0, 0.1 I)."""
    d = problem.state_dim
    m = problem.input_dim
    return baselines.PGConfig(
        K0=np.zeros((m, d)),
        step_size=0.0,
        smoothing=1.0,
        samples_per_gradient=params["metric_samples"],
        iterations=0,
        grid=params["grid"],
        init_dist_cov=0.1 * np.eye(d),
        seed=seed,
    )


class _ErrorMeter:
    """Gain/value errors against cached ARE references, shared-seed costs."""

    def __init__(self, problem, params, are_tol, seed):
        self.problem = problem
        self.cfg = _metric_config(problem, params, seed)
        P_inf = riccati.solve_are(problem, are_tol=are_tol)
        self.K_inf = riccati.optimal_gain(P_inf, problem)
        self.K_norm = np.linalg.norm(self.K_inf, "fro")
        self.c_inf = baselines.lqr_cost(problem, self.K_inf, self.cfg)
        self.c_init = baselines.lqr_cost(problem, np.zeros_like(self.K_inf), self.cfg)

    def error_gain(self, K):
        return float(np.linalg.norm(K - self.K_inf, "fro") / self.K_norm)

    def error_value(self, K):
        try:
            c_est = baselines.lqr_cost(self.problem, K, self.cfg)
        except Diverged:
            return float("nan")
        return float((c_est - self.c_inf) / (self.c_init - self.c_inf))


def cmd_pg(settings: RunSettings, threads: int) -> dict:
    problem = settings.linear_problem()
    validate_lq(problem)
    params = _pg_defaults(settings, "pg_ct", problem)
    seed = settings.seeds[0]
    d, m = problem.state_dim, problem.input_dim
    cfg = baselines.PGConfig(
        K0=np.zeros((m, d)),
        step_size=params["alpha"],
        smoothing=params["r"],
        samples_per_gradient=params["N_g"],
        iterations=params["iterations"],
        grid=params["grid"],
        init_dist_cov=np.eye(d),
        seed=seed,
    )
    manifest = _Manifest("pg", settings, settings.out_dir)
    phase = _Phase(manifest)
    meter = _ErrorMeter(problem, params, settings.are_tol, seed)
    status = "ok"
    with phase("solve"):
        try:
            K_est, trace = baselines.policy_gradient_descent(problem, cfg)
        except Diverged as exc:
            trace = exc.trace
            K_est = trace.records[-1].K if trace.records else cfg.K0
            status = "diverged"
    with phase("write"):
        error_rows = [
            (meter.error_gain(rec.K), meter.error_value(rec.K)) for rec in trace.records
        ]
        manifest.add_output(
            csvio.write_pg_trace_csv(
                os.path.join(settings.out_dir, "pg_trace.csv"), trace, error_rows
            )
        )
        manifest.doc["status"] = status
        manifest.doc["final_error_gain"] = meter.error_gain(np.atleast_2d(K_est))
        manifest.write()
    return manifest.doc


def _compare_enkf_rows(settings, problem, meter, sweep):
    rows = []
    for n in sweep:
        start = time.perf_counter()
        result = enkf.run_offline(problem, settings.experiment_config(settings.seeds[0], n))
        K_est = policy.gain_from_ensemble(result.P[0], problem)
        elapsed = time.perf_counter() - start
        rows.append(
            ["enkf", n, elapsed, meter.error_gain(K_est), meter.error_value(K_est), "ok"]
        )
    return rows


def _compare_pg_rows(settings, problem, meter, method, params):
    d, m = problem.state_dim, problem.input_dim
    cfg = baselines.PGConfig(
        K0=np.zeros((m, d)),
        step_size=params["alpha"],
        smoothing=params["r"],
        samples_per_gradient=params["N_g"],
        iterations=params["iterations"],
        grid=params["grid"],
        init_dist_cov=np.eye(d),
        seed=settings.seeds[0],
    )
    rng = np.random.Generator(
        np.random.Philox(
            np.random.SeedSequence(int(cfg.seed), spawn_key=(baselines.GRADIENT_STREAM_KEY,))
        )
    )
    rows = []
    K = np.array(cfg.K0)
    solve_time = 0.0
    checkpoint = 1
    it = 0
    while it < cfg.iterations:
        start = time.perf_counter()
        try:
            while it < min(checkpoint, cfg.iterations):
                K = K - cfg.step_size * baselines.zeroth_order_gradient(
                    problem, K, cfg, rng=rng
                )
                it += 1
        except Diverged:
            solve_time += time.perf_counter() - start
            rows.append([method, it, solve_time, float("nan"), float("nan"), "diverged"])
            return rows
        solve_time += time.perf_counter() - start
        err_gain = meter.error_gain(K)
        rows.append([method, it, solve_time, err_gain, meter.error_value(K), "ok"])
        if err_gain <= params["target_error"] or solve_time > params["time_budget_s"]:
            break
        checkpoint *= 2
    return rows


def cmd_compare(settings: RunSettings, threads: int) -> dict:
    problem = settings.linear_problem()
    validate_lq(problem)
    sweep = settings.particles if isinstance(settings.particles, list) else DEFAULT_SWEEP
    manifest = _Manifest("compare", settings, settings.out_dir)
    phase = _Phase(manifest)
    params = _pg_defaults(settings, "pg_ct", problem)
    meter = _ErrorMeter(problem, params, settings.are_tol, settings.seeds[0])
    rows = []
    with phase("solve"):
        rows.extend(_compare_enkf_rows(settings, problem, meter, sweep))
        for method in ("pg_dt", "pg_ct"):
            rows.extend(
                _compare_pg_rows(
                    settings, problem, meter, method, _pg_defaults(settings, method, problem)
                )
            )
    with phase("write"):
        manifest.add_output(
            csvio.write_csv(
                os.path.join(settings.out_dir, "compare.csv"),
                ["method", "knob_value", "elapsed_seconds", "error_gain", "error_value", "status"],
                rows,
            )
        )
        manifest.write()
    return manifest.doc


def _cartpole_pipeline(settings: RunSettings, threads: int) -> dict:
    nonlinear, linear = bench.cart_pole()
    validate_lq(linear)
    sweep = (
        settings.particles
        if isinstance(settings.particles, list)
        else DEFAULT_CARTPOLE_PARTICLES
    )
    manifest = _Manifest("cartpole", settings, settings.out_dir)
    phase = _Phase(manifest)
    seed = settings.seeds[0]
    with phase("solve"):
        reference = riccati.solve_dre(linear, settings.grid)
        exact_policy = policy.explicit_gain_policy(reference, linear)
        trajectories = {
            "dre": policy.simulate_closed_loop(
                nonlinear, exact_policy, CARTPOLE_X0, settings.grid
            )
        }
        for n in sweep:
            result = enkf.run_offline(linear, settings.experiment_config(seed, n))
            enkf_policy = policy.explicit_gain_policy(result, linear)
            trajectories[f"enkf_N{n}"] = policy.simulate_closed_loop(
                nonlinear, enkf_policy, CARTPOLE_X0, settings.grid
            )
    with phase("write"):
        manifest.add_output(
            csvio.write_schedule_csv(
                os.path.join(settings.out_dir, "dre.csv"), settings.grid, reference.P
            )
        )
        for label, traj in trajectories.items():
            manifest.add_output(
                csvio.write_trajectory_csv(
                    os.path.join(settings.out_dir, f"traj_{label}.csv"), traj
                )
            )
        manifest.doc["per_seed"] = [
            {
                "seed": seed,
                "final_distance": {
                    label: float(np.linalg.norm(traj.states[-1]))
                    for label, traj in trajectories.items()
                },
            }
        ]
        manifest.write()
    return manifest.doc


def cmd_cartpole(settings: RunSettings, threads: int) -> dict:
    return _cartpole_pipeline(settings, threads)


def cmd_mse_scaling(settings: RunSettings, threads: int) -> dict:
    problem = settings.linear_problem()
    validate_lq(problem)
    sweep = settings.particles if isinstance(settings.particles, list) else DEFAULT_SWEEP
    manifest = _Manifest("mse-scaling", settings, settings.out_dir)
    phase = _Phase(manifest)
    with phase("solve"):
        reference = riccati.solve_dre(problem, settings.grid)

        def one(job):
            n, seed = job
            result = enkf.run_offline(problem, settings.experiment_config(seed, n))
            return bench.relative_mse(result, reference)

        jobs = [(n, seed) for n in sweep for seed in settings.seeds]
        if threads <= 1:
            mses = {job: one(job) for job in jobs}
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                mses = dict(zip(jobs, pool.map(one, jobs)))
        means = [float(np.mean([mses[(n, s)] for s in settings.seeds])) for n in sweep]
        errs = [_stderr([mses[(n, s)] for s in settings.seeds]) for n in sweep]
        slope = loglog_slope(sweep, means)
    with phase("write"):
        manifest.add_output(
            csvio.write_csv(
                os.path.join(settings.out_dir, "mse_vs_N.csv"),
                ["N", "mean_mse", "stderr_mse"],
                [[n, mu, se] for n, mu, se in zip(sweep, means, errs)],
            )
        )
        manifest.doc["slope"] = slope
        manifest.write()
    return manifest.doc


_COMMANDS = {
    "dre": cmd_dre,
    "are": cmd_are,
    "enkf": cmd_enkf,
    "enkf-nl": cmd_enkf_nl,
    "pg": cmd_pg,
    "compare": cmd_compare,
    "cartpole": cmd_cartpole,
    "mse-scaling": cmd_mse_scaling,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dual-enkf",
        description="Simulation-based LQ optimal control experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="seed-sweep worker threads")
        p.add_argument(
            "--seed-override", type=int, default=None, help="base seed replacing the default 0"
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = parse_config(args.config, seed_override=args.seed_override)
        if args.out is not None:
            settings.out_dir = args.out
        os.makedirs(settings.out_dir, exist_ok=True)
        probe = os.path.join(settings.out_dir, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
        _COMMANDS[args.command](settings, max(1, args.threads))
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DualEnkfError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint():
    raise SystemExit(main())
