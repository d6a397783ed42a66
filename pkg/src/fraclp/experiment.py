"""Run experiments described by an :class:`~fraclp.config.ExperimentConfig`
and write their artifacts.

A run directory holds

* ``iterations.csv`` -- one row per outer iteration,
* ``solution.csv``   -- final iterate in grid-function CSV format,
* ``report.txt``     -- ``key = value`` stationarity summary,
* ``manifest.json``  -- config digest, seed and library versions.

All floats are written with 17 significant digits, so equal configs give
byte-identical files on one platform.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import logging
import os
import platform
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, dumps, expand_sweep
from .frac_ops import integral_stiffness, spectral_operator
from .grid import Grid, check_function, read_function_csv, write_function_csv
from .objective import HeatSourceProblem, TrackingProblem, add_noise
from .solver import IterationRecord, RunResult, run, tikhonov_start

__all__ = ["build_grid", "build_operator", "build_problem", "blocks_function",
           "solve_config", "run_experiment", "run_sweep", "emit_plotdata", "StageError"]

log = logging.getLogger(__name__)

RUN_FILES = ("iterations.csv", "solution.csv", "report.txt", "manifest.json")


class StageError(RuntimeError):
    """Failure in a named stage of an experiment."""

    def __init__(self, stage, message):
        super().__init__(f"{stage} stage failed: {message}")
        self.stage = stage


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def build_grid(cfg: ExperimentConfig) -> Grid:
    if cfg.dim == 1:
        return Grid(n=cfg.n, length=cfg.length)
    return Grid(n=cfg.n, length=cfg.length, dim=2, ny=cfg.ny or cfg.n,
                length_y=cfg.length_y or cfg.length)


def build_operator(cfg: ExperimentConfig, grid: Grid):
    if cfg.operator == "spectral":
        return spectral_operator(grid, cfg.s)
    return integral_stiffness(grid, cfg.s, max_n=cfg.max_n)


def blocks_function(grid: Grid, text: str) -> np.ndarray:
    """Piecewise-constant nodal function from ``'a:b:v; ...'`` (open intervals)
    or ``'x0:x1:y0:y1:v; ...'`` in 2-D."""
    u = grid.zeros()
    pts = grid.nodes()
    for part in filter(None, (p.strip() for p in text.split(";"))):
        nums = [float(t) for t in part.split(":")]
        if grid.dim == 1:
            if len(nums) != 3:
                raise ValueError(f"block {part!r}: expected a:b:value")
            a, b, v = nums
            u[(pts > a) & (pts < b)] += v
        else:
            if len(nums) != 5:
                raise ValueError(f"block {part!r}: expected x0:x1:y0:y1:value")
            x0, x1, y0, y1, v = nums
            mask = (pts[:, 0] > x0) & (pts[:, 0] < x1) & (pts[:, 1] > y0) & (pts[:, 1] < y1)
            u[mask] += v
    return u


def build_problem(cfg: ExperimentConfig, grid: Grid, base_dir: Path = Path(".")):
    """Return ``(problem, truth)``; ``truth`` is ``None`` when z is read from file."""
    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    truth = None
    if cfg.truth_path:
        truth = read_function_csv(resolve(cfg.truth_path), grid)
    elif cfg.truth_blocks:
        truth = blocks_function(grid, cfg.truth_blocks)

    if cfg.objective == "tracking":
        if cfg.z_path:
            z = read_function_csv(resolve(cfg.z_path), grid)
        else:
            z = truth.copy()
        z = add_noise(z, cfg.noise_std, cfg.seed)
        return TrackingProblem(grid, z), truth

    if cfg.y0_path:
        y0 = read_function_csv(resolve(cfg.y0_path), grid)
    else:
        y0 = cfg.y0_amplitude * np.sin(np.pi * grid.x / grid.length)
    a = (read_function_csv(resolve(cfg.diffusivity_path), grid)
         if cfg.diffusivity_path else cfg.diffusivity)
    kw = dict(y0=y0, diffusivity=a, reaction=cfg.reaction, T=cfg.T, nt=cfg.nt)
    if cfg.z_path:
        z = read_function_csv(resolve(cfg.z_path), grid)
    else:
        z = HeatSourceProblem(grid, grid.zeros(), **kw).heat_forward(truth).final
    z = add_noise(z, cfg.noise_std, cfg.seed)
    return HeatSourceProblem(grid, z, **kw), truth


def solve_config(cfg: ExperimentConfig, base_dir: Path = Path(".")):
    """Build everything and run the solver; returns ``(grid, op, problem, result)``."""
    try:
        grid = build_grid(cfg)
        op = build_operator(cfg, grid)
    except Exception as exc:
        raise StageError("operator", exc) from exc
    try:
        prob, _ = build_problem(cfg, grid, base_dir)
    except Exception as exc:
        raise StageError("data", exc) from exc
    scfg = cfg.solver_config()
    try:
        u0 = tikhonov_start(scfg, op, prob) if cfg.u0 == "tikhonov" else grid.zeros()
        result = run(scfg, op, prob, u0)
    except Exception as exc:
        raise StageError("solve", exc) from exc
    return grid, op, prob, result


def _write_records(path, records: list[IterationRecord]):
    names = IterationRecord.field_names()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for rec in records:
            row = rec.as_row()
            w.writerow([_fmt(row[k]) for k in names])


def _report_items(cfg: ExperimentConfig, result: RunResult):
    last = result.records[-1]
    rep = result.report
    items = {
        "converged": result.converged,
        "iterations": len(result.records),
        "phi_initial": result.phi0,
        "phi_final": last.phi_next,
        "eps_final": result.eps_final,
        "eps_last_step": last.eps_k,
        "L_max": max(r.L_k for r in result.records),
        "step_V_final": last.step_V,
        "support_fraction": last.support_fraction,
        "phi_guard_rejections": result.extra.get("rejections", 0),
        "null_steps": result.extra.get("null_steps", 0),
        "alpha": cfg.alpha,
        "beta_reg": cfg.beta_reg,
        "p": cfg.p,
        "tol_step": cfg.tol_step,
        "tol_cg": cfg.tol_cg,
    }
    items.update(rep.as_dict())
    return items


def write_run(out: Path, cfg: ExperimentConfig, grid, op, result: RunResult):
    out.mkdir(parents=True, exist_ok=True)
    _write_records(out / "iterations.csv", result.records)
    write_function_csv(out / "solution.csv", grid, result.u)
    with open(out / "report.txt", "w") as fh:
        for k, v in _report_items(cfg, result).items():
            fh.write(f"{k} = {_fmt(v)}\n")
    manifest = {
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "fraclp": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "config": dumps(cfg),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if cfg.dump_matrix:
        op.dump_matrix(out / "matrix.csv")


def run_experiment(cfg: ExperimentConfig, out_dir=None, base_dir: Path = Path(".")) -> Path:
    """Execute a single run (ignores any sweep) and write its artifacts."""
    out = Path(out_dir if out_dir is not None else cfg.directory)
    grid, op, _, result = solve_config(cfg, base_dir)
    try:
        write_run(out, cfg, grid, op, result)
    except Exception as exc:
        raise StageError("output", exc) from exc
    log.info("run finished: %d iterations, converged=%s, output in %s",
             len(result.records), result.converged, out)
    return out


def _sweep_member(args):
    label, cfg, out, base_dir = args
    run_experiment(cfg, out / label, base_dir)
    return label


def run_sweep(cfg: ExperimentConfig, out_dir=None, base_dir: Path = Path("."),
              workers: int | None = None) -> Path:
    """Run every sweep member into its own subdirectory and write
    ``summary.csv``.  ``workers`` defaults to ``$FRACLP_THREADS`` (or 1)."""
    out = Path(out_dir if out_dir is not None else cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    members = expand_sweep(cfg)
    if workers is None:
        workers = int(os.environ.get("FRACLP_THREADS", "1") or 1)
    jobs = [(label, member, out, base_dir) for label, member in members]
    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_sweep_member, jobs))
    else:
        for job in jobs:
            _sweep_member(job)

    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([cfg.sweep_parameter or "run", "phi_final", "support_fraction",
                    "pairing_gap", "residual_norm", "converged", "iterations"])
        for (label, member) in members:
            rep = read_report(out / label)
            value = getattr(member, cfg.sweep_parameter) if cfg.sweep_parameter else label
            w.writerow([_fmt(value) if cfg.sweep_parameter else value,
                        _fmt(rep["phi_final"]), _fmt(rep["support_fraction"]),
                        _fmt(rep["pairing_gap"]), _fmt(rep["residual_norm"]),
                        _fmt(rep["converged"]), _fmt(rep["iterations"])])
    return out


def read_report(run_dir) -> dict[str, float]:
    out = {}
    with open(Path(run_dir) / "report.txt") as fh:
        for line in fh:
            if "=" in line:
                k, v = line.split("=", 1)
                out[k.strip()] = float(v)
    return out


def read_records(run_dir) -> list[dict[str, float]]:
    with open(Path(run_dir) / "iterations.csv", newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def emit_plotdata(run_dir) -> list[Path]:
    """Write long-format CSVs for external plotting into ``<run_dir>/plotdata``:
    Phi and step norm against k, u against x and the support mask."""
    run_dir = Path(run_dir)
    missing = [f for f in ("iterations.csv", "solution.csv", "report.txt")
               if not (run_dir / f).is_file()]
    if missing:
        raise FileNotFoundError(f"{run_dir}: missing run artifacts {', '.join(missing)}")
    records = read_records(run_dir)
    if not records:
        raise ValueError(f"{run_dir}: iterations.csv has no rows")
    report = read_report(run_dir)
    with open(run_dir / "solution.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader]
    coords, values = [r[:-1] for r in rows], np.array([r[-1] for r in rows])
    eps = report["eps_last_step"]

    target = run_dir / "plotdata"
    target.mkdir(exist_ok=True)
    written = []

    def dump(name, head, data):
        path = target / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(head)
            for row in data:
                w.writerow([_fmt(v) for v in row])
        written.append(path)

    phis = [(int(r["k"]), r["phi"]) for r in records]
    phis.append((int(records[-1]["k"]) + 1, records[-1]["phi_next"]))
    dump("phi_history.csv", ["k", "phi"], phis)
    dump("step_norm.csv", ["k", "step_V"], [(int(r["k"]), r["step_V"]) for r in records])
    dump("u_profile.csv", header[:-1] + ["u"], [c + [v] for c, v in zip(coords, values)])
    dump("support_mask.csv", header[:-1] + ["support"],
         [c + [int(abs(v) > eps)] for c, v in zip(coords, values)])
    return written


def load_solution(run_dir, grid: Grid) -> np.ndarray:
    return check_function(grid, read_function_csv(Path(run_dir) / "solution.csv", grid))
