"""
Experiment Runner

Runs every (a, b) variant of an experiment (and every sample path for
IR-DSGT), logs MetricRows every ``log_every`` iterations and writes:

    <out>/problem.json                 Cournot coefficients
    <out>/oracle.json                  x* and its lambda trajectory (oracle enabled)
    <out>/<variant>.csv                IR-Push-Pull metrics
    <out>/<variant>_path<NN>.csv       IR-DSGT metrics of one sample path
    <out>/<variant>_mean.csv           IR-DSGT path means
    <out>/<variant>_min.csv, _max.csv  IR-DSGT pointwise path envelope
    <out>/<variant>[_path<NN>].npz     state snapshots (save_snapshots)
    <out>/manifest.json                config echo, seeds, versions, wall time, task outcomes

Every number written depends only on the config; worker count and task
completion order never change a CSV byte.
"""

from __future__ import annotations

import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from . import __version__
from .config import Algorithm, ExperimentConfig, ExperimentSetup, ScheduleVariant, build_setup, dump_config
from .errors import ConfigurationError, DivergenceError
from .graph import SpectralReport
from .metrics import (
    TikhonovTracker,
    aggregate_paths,
    compute_metrics,
    network_average,
    read_metrics_csv,
    save_snapshots,
    write_metrics_csv,
)
from .problem import save_params
from .registry import RunRegistry, registry_url
from .settings import settings
from .solvers import (
    OracleSolution,
    geometric_lambdas,
    initial_point,
    run_dsgt,
    run_push_pull,
    sequential_regularization,
)
from .validation import validate_setup

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaskResult:
    variant: str
    path: int
    status: str
    k_reached: int
    rows: int
    csv: str | None
    wall_time_s: float
    error: str | None = None


@dataclass(frozen=True)
class RunSummary:
    out_dir: Path
    manifest_path: Path
    tasks: list[TaskResult]
    means: list[str]
    envelopes: list[str] = field(default_factory=list)

    @property
    def diverged(self) -> bool:
        return any(t.status == "diverged" for t in self.tasks)


def logged_iterations(iterations: int, log_every: int) -> list[int]:
    """0, log_every, 2 log_every, ... plus the final iteration."""
    ks = list(range(0, iterations + 1, log_every))
    if ks[-1] != iterations:
        ks.append(iterations)
    return ks


def task_stem(cfg: ExperimentConfig, variant: ScheduleVariant, path: int) -> str:
    if cfg.algorithm is Algorithm.IR_PUSH_PULL:
        return variant.label
    return f"{variant.label}_path{path:02d}"


# ============================================================================
# ORACLE
# ============================================================================
def compute_oracle(setup: ExperimentSetup) -> OracleSolution:
    spec = setup.cfg.oracle
    lambdas = geometric_lambdas(spec.lambda_start, spec.lambda_stop, spec.stages)
    return sequential_regularization(setup.inst, lambdas, spec.tol, method=spec.method, max_iters=spec.max_iters)


def write_oracle(solution: OracleSolution, path: Path) -> Path:
    path.write_text(json.dumps(solution.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


# ============================================================================
# SINGLE TASK
# ============================================================================
def run_task(
    setup: ExperimentSetup,
    spectral: SpectralReport,
    variant: ScheduleVariant,
    path: int,
    out_dir: Path,
    oracle: OracleSolution | None = None,
    strict: bool = True,
) -> TaskResult:
    """Run one variant / sample path and write its CSV (and snapshots)."""
    cfg = setup.cfg
    inst = setup.inst
    sched = cfg.schedule.params(variant, cfg.mode)
    x0 = initial_point(inst, cfg.init_seed)

    if cfg.algorithm is Algorithm.IR_PUSH_PULL:
        states = run_push_pull(inst, sched, setup.R, setup.C, x0, cfg.iterations + 1, strict=strict)
        u = spectral.u if cfg.average == "weighted" else None
        v = spectral.v
    else:
        states = run_dsgt(inst, sched, setup.W, x0, cfg.iterations + 1, cfg.seed, path, strict=strict)
        u, v = None, None

    tracker = TikhonovTracker(inst, tol=cfg.oracle.tikhonov_tol) if cfg.oracle.track_tikhonov else None
    logged = set(logged_iterations(cfg.iterations, cfg.log_every))
    stem = task_stem(cfg, variant, path)
    rows, kept, next_X = [], [], []
    pending = None
    k_reached = 0
    status, error = "ok", None
    started = time.perf_counter()

    try:
        for s in states:
            k_reached = s.k
            if pending is not None:
                rows.append(compute_metrics(pending, inst, sched, u=u, v=v, mode=cfg.mode, oracle=oracle,
                                            tracker=tracker, next_average=network_average(s.X, u)))
                if cfg.save_snapshots:
                    kept.append(pending)
                    next_X.append(s.X)
                pending = None
            if s.k in logged:
                pending = s
                logger.debug("%s: checkpoint k=%d", stem, s.k)
    except DivergenceError as exc:
        status, error = "diverged", str(exc)
        logger.warning("%s diverged: %s", stem, exc)

    csv_path = write_metrics_csv(rows, out_dir / f"{stem}.csv")
    if cfg.save_snapshots and kept:
        save_snapshots(out_dir / f"{stem}.npz", kept, next_X)
    elapsed = time.perf_counter() - started
    logger.info("%s finished (%s) with %d rows in %.1fs", stem, status, len(rows), elapsed)
    return TaskResult(variant=variant.label, path=path, status=status, k_reached=k_reached,
                      rows=len(rows), csv=csv_path.name, wall_time_s=round(elapsed, 3), error=error)


def _worker(cfg_json: str, variant_index: int, path: int, out_dir: str, oracle_data: dict | None,
            strict: bool) -> TaskResult:
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    setup = build_setup(cfg)
    oracle = OracleSolution.from_dict(oracle_data) if oracle_data is not None else None
    return run_task(setup, setup.spectral(), cfg.schedule.variants[variant_index], path, Path(out_dir),
                    oracle, strict)


# ============================================================================
# EXPERIMENT
# ============================================================================
def _versions() -> dict[str, str]:
    out = {"optneq": __version__, "python": platform.python_version()}
    for package in ("numpy", "pandas", "pydantic", "networkx", "SQLAlchemy"):
        try:
            out[package] = importlib_metadata.version(package)
        except importlib_metadata.PackageNotFoundError:
            out[package] = "unknown"
    return out


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    *,
    force: bool = False,
    workers: int | None = None,
) -> RunSummary:
    """
    Validate, run every task and write all artifacts of ``cfg``.

    Args:
        cfg: experiment configuration
        out_dir: output directory (config value, then OPTNEQ_OUTPUT_DIR)
        force: run even when validation fails
        workers: process count (config value, then OPTNEQ_WORKERS)

    Returns:
        RunSummary; a diverged variant is recorded there, the others still run

    Raises:
        ConfigurationError: validation failed and ``force`` is off
    """
    out = Path(out_dir or cfg.output_dir or settings.output_dir)
    workers = workers or cfg.workers or settings.workers

    report = validate_setup(cfg)
    if not report.passed:
        if not force:
            raise ConfigurationError(f"experiment {cfg.name!r} failed validation\n{report.render()}")
        logger.warning("running %s despite failed validation", cfg.name)

    started = time.perf_counter()
    out.mkdir(parents=True, exist_ok=True)
    setup = build_setup(cfg)
    spectral = setup.spectral()
    save_params(setup.params, out / "problem.json")

    oracle = None
    if cfg.oracle.enabled:
        oracle = compute_oracle(setup)
        write_oracle(oracle, out / "oracle.json")

    jobs = [(vi, p) for vi in range(len(cfg.schedule.variants)) for p in range(cfg.paths)]
    logger.info("running %s: %d task(s) on %d worker(s)", cfg.name, len(jobs), workers)
    if workers > 1 and len(jobs) > 1:
        cfg_json = cfg.model_dump_json()
        oracle_data = oracle.to_dict() if oracle is not None else None
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_worker, cfg_json, vi, p, str(out), oracle_data, not force)
                       for vi, p in jobs]
            results = [f.result() for f in futures]
    else:
        results = [run_task(setup, spectral, cfg.schedule.variants[vi], p, out, oracle, not force)
                   for vi, p in jobs]

    means, envelopes = [], []
    if cfg.algorithm is Algorithm.IR_DSGT:
        for variant in cfg.schedule.variants:
            mine = [r for r in results if r.variant == variant.label]
            if any(r.status != "ok" for r in mine):
                logger.warning("skipping path mean of %s: not every path finished", variant.label)
                continue
            agg = aggregate_paths([read_metrics_csv(out / r.csv) for r in mine])
            means.append(write_metrics_csv(agg.mean, out / f"{variant.label}_mean.csv").name)
            envelopes.append(write_metrics_csv(agg.low, out / f"{variant.label}_min.csv").name)
            envelopes.append(write_metrics_csv(agg.high, out / f"{variant.label}_max.csv").name)

    wall = time.perf_counter() - started
    manifest = {
        "config": json.loads(dump_config(cfg)),
        "seeds": {
            "topology": cfg.topology.seed,
            "problem": cfg.problem.seed,
            "noise": cfg.seed,
            "init": cfg.init_seed,
        },
        "versions": _versions(),
        "wall_time_s": round(wall, 3),
        "workers": workers,
        "forced": force and not report.passed,
        "spectral": {
            "sigma_r": spectral.sigma_r,
            "sigma_c": spectral.sigma_c,
            "rho_w": spectral.rho_w,
            "u": None if spectral.u is None else np.asarray(spectral.u).tolist(),
            "v": None if spectral.v is None else np.asarray(spectral.v).tolist(),
        },
        "problem": "problem.json",
        "oracle": "oracle.json" if oracle is not None else None,
        "tasks": [asdict(r) for r in results],
        "means": means,
        "envelopes": envelopes,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    if cfg.registry or settings.results_db:
        status = "diverged" if any(r.status == "diverged" for r in results) else "ok"
        RunRegistry(registry_url(output_dir=out)).record_experiment(
            cfg.name, cfg.algorithm.value, str(out), manifest["config"], wall, status,
            [asdict(r) for r in results],
        )

    logger.info("%s done in %.1fs; manifest at %s", cfg.name, wall, manifest_path)
    return RunSummary(out_dir=out, manifest_path=manifest_path, tasks=results, means=means,
                     envelopes=envelopes)


def load_manifest(path: str | Path) -> ExperimentConfig:
    """Rebuild the ExperimentConfig echoed in a manifest."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExperimentConfig.model_validate(data["config"])
