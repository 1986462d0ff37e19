"""Experiment configuration, orchestration and serialization.

A run is one ``(delta_rel, seed)`` pair: generate noisy data, run the outer
solve, and write

* ``history_<tag>.csv``  one row per inner iteration (columns ``CSV_COLUMNS``)
* ``reconstruction_<tag>.csv`` and ``data_<tag>.csv``  two columns (grid point, value)
* ``run_<tag>.json``  config echo, final radius, residual, termination reason
* ``error_<tag>.json``  only when the solver fails; the partial history is kept

where ``<tag>`` is ``d<delta_rel>_s<seed>``.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, NonConvergenceError, TrsConvergenceError
from .ivanov import CSV_COLUMNS, ExperimentRecord, SolverOptions, Tolerances, outer_solve
from .linalg import WeightedVector
from .model import ResidualFunctional
from .problems import BENCHMARK_PEAK, CubicVolterra, NoisySetup, benchmark_truth, make_noisy
from .trs import random_instance, solve_trs, solve_trs_oracle

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_MISMATCH = 0, 2, 3, 4
THREADS_ENV = "QUASITRUST_THREADS"


@dataclass
class ProblemConfig:
    name: str = "cubic_volterra"
    cubic: float = 10.0
    peak: float = BENCHMARK_PEAK
    interval_length: float = 1.0


@dataclass
class EmitConfig:
    histories: bool = True
    reconstructions: bool = True
    trs_trace: bool = False


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    n: int = 100
    delta_rel: list = field(default_factory=lambda: [3.0, 1.0, 0.1])
    tau: float = 2.0
    eta: float = 0.0
    eta_lower: float = 0.0
    eta_upper: float = 0.0
    rho1: Optional[float] = None
    seeds: list = field(default_factory=lambda: [0])
    max_inner: int = 500
    max_outer: int = 100
    output_dir: str = "runs"
    record_wall_time: bool = True
    emit: EmitConfig = field(default_factory=EmitConfig)

    # -- construction -------------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        raw = dict(raw)
        problem = _build(ProblemConfig, raw.pop("problem", {}), "problem")
        emit = _build(EmitConfig, raw.pop("emit", {}), "emit")
        cfg = _build(cls, raw, None)
        cfg.problem, cfg.emit = problem, emit
        cfg.delta_rel = [float(d) for d in _as_list(cfg.delta_rel, "delta_rel")]
        cfg.seeds = [int(s) for s in _as_list(cfg.seeds, "seeds")]
        return cfg

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # -- validation -------------------------------------------------------------

    def validate(self) -> ExperimentConfig:
        """Check every invariant, including the tolerance conditions for each run's noise level."""
        if self.problem.name != "cubic_volterra":
            raise ConfigError(f"unknown problem {self.problem.name!r}")
        if self.n < 3:
            raise ConfigError(f"n must be at least 3, got {self.n}")
        if not self.delta_rel:
            raise ConfigError("delta_rel must list at least one noise level")
        if any(not (d >= 0) for d in self.delta_rel):
            raise ConfigError(f"delta_rel entries must be nonnegative, got {self.delta_rel}")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        if not self.tau > 1:
            raise ConfigError(f"tau must exceed 1, got {self.tau}")
        if self.rho1 is not None and not self.rho1 > 0:
            raise ConfigError(f"rho1 must be positive, got {self.rho1}")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ConfigError("max_inner and max_outer must be positive")
        for delta_rel in self.delta_rel:
            for seed in self.seeds:
                setup = self.noisy_setup(delta_rel, seed)
                if setup.delta_abs <= 0:
                    raise ConfigError(f"delta_rel={delta_rel} gives zero noise; the discrepancy principle needs delta > 0")
                self.tolerances(setup)
        return self

    # -- per-run objects ----------------------------------------------------------

    def build_problem(self) -> CubicVolterra:
        return CubicVolterra(self.n, self.problem.cubic, self.problem.interval_length)

    def x_true(self, problem: CubicVolterra) -> np.ndarray:
        return benchmark_truth(problem.grid / self.problem.interval_length, self.problem.peak)

    def noisy_setup(self, delta_rel: float, seed: int) -> NoisySetup:
        p = self.build_problem()
        return make_noisy(p, self.x_true(p), delta_rel, seed)

    def tolerances(self, setup: NoisySetup) -> Tolerances:
        return Tolerances(setup.delta_abs, self.tau, self.eta, self.eta_lower, self.eta_upper)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(max_inner=self.max_inner, max_outer=self.max_outer,
                             trs_debug=self.emit.trs_trace)


def _as_list(value, name) -> list:
    if isinstance(value, (list, tuple)):
        return list(value)
    if isinstance(value, (int, float)):
        return [value]
    raise ConfigError(f"{name} must be a list, got {value!r}")


def _build(cls, raw: dict, section: Optional[str]):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{section}] must be a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        where = f"[{section}]" if section else "top level"
        raise ConfigError(f"unknown config keys at {where}: {', '.join(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# -- serialization ----------------------------------------------------------------


def format_value(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_history(path: Path, records: list[ExperimentRecord], wall_time: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            row = list(rec.row())
            if not wall_time:
                row[-1] = 0.0
            w.writerow([format_value(v) for v in row])


def read_history(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_columns(path: Path, grid: np.ndarray, values: np.ndarray, header=("s", "value")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s, v in zip(grid, values):
            w.writerow([format_value(s), format_value(v)])


def run_tag(delta_rel: float, seed: int) -> str:
    return f"d{delta_rel:g}_s{seed}"


# -- runs -------------------------------------------------------------------------


@dataclass
class RunResult:
    delta_rel: float
    seed: int
    ok: bool
    exit_code: int
    residual: float = math.nan
    delta_abs: float = math.nan
    rho: float = math.nan
    error: float = math.nan
    termination: str = ""
    message: str = ""


def run_single(cfg: ExperimentConfig, delta_rel: float, seed: int) -> RunResult:
    """Solve one ``(delta_rel, seed)`` case and write its artifacts."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = run_tag(delta_rel, seed)
    p = cfg.build_problem()
    x_true = cfg.x_true(p)
    setup = make_noisy(p, x_true, delta_rel, seed)
    tol = cfg.tolerances(setup)
    rf = ResidualFunctional(p, setup.y_delta.coeffs)
    opts = cfg.solver_options()

    records: list[ExperimentRecord] = []
    traces: list[dict] = []

    def on_record(rec: ExperimentRecord):
        records.append(rec)
        if rec.trs_trace is not None:
            traces.append({"l": rec.l, "k": rec.k, "trace": rec.trs_trace})

    if cfg.emit.reconstructions:
        write_columns(out / f"data_{tag}.csv", p.grid, setup.y_delta.coeffs, ("t", "y_delta"))

    meta: dict[str, Any] = {
        "config": cfg.to_dict(), "delta_rel": delta_rel, "seed": seed,
        "delta_abs": setup.delta_abs, "discrepancy_interval": [tol.lower, tol.upper],
    }
    result = RunResult(delta_rel, seed, False, EXIT_NONCONVERGENCE, delta_abs=setup.delta_abs)
    try:
        state = outer_solve(rf, tol, rho1=cfg.rho1, opts=opts, x_true=x_true, on_record=on_record)
    except NonConvergenceError as exc:
        partial = getattr(exc, "state", None)
        manifest = {
            **meta, "error": type(exc).__name__, "message": str(exc),
            "n_records": len(records),
            "last_rho": getattr(partial, "rho_l", None),
            "last_residual": getattr(partial, "residual", None),
        }
        if cfg.emit.histories:
            write_history(out / f"history_{tag}.csv", records, cfg.record_wall_time)
        (out / f"error_{tag}.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        result.message = str(exc)
        result.termination = "failed"
        return result

    err = (state.x_hat - WeightedVector(x_true, p.weights)).norm() / WeightedVector(x_true, p.weights).norm()
    if cfg.emit.histories:
        write_history(out / f"history_{tag}.csv", records, cfg.record_wall_time)
    if cfg.emit.reconstructions:
        write_columns(out / f"reconstruction_{tag}.csv", p.grid, state.x_hat.coeffs, ("s", "x"))
    if cfg.emit.trs_trace:
        with open(out / f"trs_trace_{tag}.jsonl", "w") as fh:
            for entry in traces:
                fh.write(json.dumps(_jsonable(entry), sort_keys=True) + "\n")
    meta.update({
        "rho": state.rho_l, "residual": state.residual, "lambda_rho": state.lambda_rho,
        "termination": state.termination, "outer_iterations": state.l,
        "n_trs": state.n_trs, "n_nonconvex": state.n_nonconvex, "backtracks": state.backtracks,
        "relative_error": err, "radii": state.radii, "residuals": state.residuals,
        "min_eig": state.min_eigs,
    })
    (out / f"run_{tag}.json").write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    result.ok, result.exit_code = True, EXIT_OK
    result.residual, result.rho, result.error = state.residual, state.rho_l, err
    result.termination = state.termination
    return result


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc


def run_experiment(cfg: ExperimentConfig) -> tuple[int, list[RunResult]]:
    """Run every ``(delta_rel, seed)`` pair; returns the exit status and per-run results.

    Runs are independent; with ``QUASITRUST_THREADS > 1`` they go to a process
    pool, and the artifacts do not depend on the worker count.
    """
    cfg.validate()
    jobs = [(d, s) for d in cfg.delta_rel for s in cfg.seeds]
    workers = min(worker_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_single, [cfg] * len(jobs), *zip(*jobs)))
    else:
        results = [run_single(cfg, d, s) for d, s in jobs]
    code = EXIT_OK if all(r.ok for r in results) else EXIT_NONCONVERGENCE
    return code, results


# -- derivative probes ------------------------------------------------------------------


def derivative_probes(cfg: ExperimentConfig, points: int = 5, step: float = 1e-5, seed: int = 0) -> dict:
    """Central-difference checks of gradient and Hessian action at random points.

    Returns the worst relative errors.
    """
    p = cfg.build_problem()
    setup = cfg.noisy_setup(cfg.delta_rel[0], cfg.seeds[0])
    rf = ResidualFunctional(p, setup.y_delta.coeffs)
    rng = np.random.default_rng(seed)
    w = p.weights
    worst_g = worst_h = 0.0
    for _ in range(points):
        x = rng.uniform(-1.0, 1.0, p.dim_in)
        d = rng.standard_normal(p.dim_in)
        g = rf.gradient(x)
        fd = (rf.value(x + step * d) - rf.value(x - step * d)) / (2 * step)
        exact = float(np.sum(w * g * d))
        worst_g = max(worst_g, abs(fd - exact) / max(abs(exact), 1e-300))
        hd = rf.hessian_action(x, d)
        fd_h = (rf.gradient(x + step * d) - rf.gradient(x - step * d)) / (2 * step)
        worst_h = max(worst_h, float(np.linalg.norm(fd_h - hd) / max(np.linalg.norm(hd), 1e-300)))
    return {"gradient": worst_g, "hessian": worst_h}


# -- TRS oracle bench -------------------------------------------------------------------------


@dataclass
class BenchRow:
    index: int
    dim: int
    kind: str
    gap: float
    kkt: float
    iterations: int


def bench_instances(dims: list[int], count: int, seed: int):
    """Deterministic stream of ``(index, kind, TrsProblem)``; kinds are
    ``hard`` (p = 0.1), ``indefinite`` (p = 0.45) and ``definite``."""
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        dim = int(dims[i % len(dims)])
        u = rng.uniform()
        kind = "hard" if u < 0.1 and dim >= 2 else ("indefinite" if u < 0.55 else "definite")
        prob = random_instance(rng, dim, indefinite=kind != "definite", hard_case=kind == "hard")
        yield i, kind, prob


def run_trs_bench(dims: list[int], count: int, seed: int, gap_tol: float = 1e-6) -> tuple[int, list[BenchRow]]:
    """Solve random instances with both the bordered-matrix solver and the dense oracle."""
    if any(d < 1 or d > 500 for d in dims):
        raise ConfigError(f"dims must lie in [1, 500], got {dims}")
    if count < 0:
        raise ConfigError(f"count must be nonnegative, got {count}")
    if count and not dims:
        raise ConfigError("dims must not be empty")
    rows = []
    for i, kind, prob in bench_instances(dims, count, seed):
        try:
            sol = solve_trs(prob)
        except TrsConvergenceError:
            rows.append(BenchRow(i, prob.dim, kind, math.inf, math.inf, -1))
            continue
        ref = solve_trs_oracle(prob)
        gap = abs(sol.objective - ref.objective) / max(abs(ref.objective), 1e-300)
        rows.append(BenchRow(i, prob.dim, kind, gap, sol.kkt_residual(prob), sol.iterations))
    bad = [r for r in rows if not r.gap <= gap_tol]
    return (EXIT_MISMATCH if bad else EXIT_OK), rows
