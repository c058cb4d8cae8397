"""
Setup Validation

``validate_setup`` builds every object of an experiment and runs the
checkable assumptions of the chosen method:

* mixing-matrix stochasticity and positive diagonals
* root intersection (IR-Push-Pull) or connectivity (IR-DSGT)
* contraction factors sigma_R, sigma_C < 1 or rho_W < 1 with margin
* monotone F (PSD symmetric part of C_bar) and strongly convex welfare loss
* schedule exponent inequalities of every (a, b) variant
* unbiasedness of the sampled coefficients (z-scores, Bonferroni corrected)

Builder failures become failed report entries rather than exceptions.
"""

from __future__ import annotations

import logging
from statistics import NormalDist

import numpy as np
from pydantic import BaseModel

from .config import Algorithm, ExperimentConfig, build_problem, topology_from_spec
from .errors import OptNeqError
from .graph import (
    STOCHASTIC_TOL,
    build_gossip_matrix,
    build_pull_matrix,
    build_push_matrix,
    check_root_intersection,
    is_connected,
    spectral_report,
)
from .problem import ProblemInstance
from .schedule import validate_schedule

logger = logging.getLogger(__name__)

RHO_MARGIN = 0.01
PSD_TOL = 1e-8
UNBIASED_FAMILY_ALPHA = 1e-3


class CheckResult(BaseModel):
    name: str
    passed: bool
    measured: float | str | None = None
    detail: str = ""
    hard: bool = True


class ValidationReport(BaseModel):
    """Per-assumption outcome; ``passed`` only considers hard checks."""

    config_name: str
    algorithm: Algorithm
    checks: list[CheckResult] = []
    notes: list[str] = []

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def add(self, name: str, passed: bool, measured=None, detail: str = "", hard: bool = True) -> None:
        if isinstance(measured, (np.floating, np.integer)):
            measured = measured.item()
        self.checks.append(CheckResult(name=name, passed=bool(passed), measured=measured, detail=detail, hard=hard))

    def to_dict(self) -> dict:
        return self.model_dump(mode="json") | {"passed": self.passed}

    def render(self) -> str:
        lines = ["=" * 60, f"Validation report: {self.config_name} ({self.algorithm.value})", "=" * 60]
        for c in self.checks:
            mark = "✅" if c.passed else ("❌" if c.hard else "⚠️")
            measured = "" if c.measured is None else f" [{c.measured}]"
            detail = f" - {c.detail}" if c.detail else ""
            lines.append(f"{mark} {c.name}{measured}{detail}")
        for note in self.notes:
            lines.append(f"ℹ️  {note}")
        lines.append("=" * 60)
        lines.append("✅ ALL CHECKS PASSED" if self.passed else "❌ VALIDATION FAILED")
        return "\n".join(lines)


def unbiasedness_zscores(inst: ProblemInstance, samples: int, seed: int, path: int, points: int = 3) -> np.ndarray:
    """
    z-scores of the empirical mean of sampled F_i against the expected F_i.

    Returns an array of shape (points, m): coordinate i of agent i's map at
    ``points`` random locations.
    """
    noise = inst.noise
    rng = np.random.default_rng(seed)
    upper = inst.upper if inst.upper is not None else np.ones(inst.n)
    idx = np.arange(inst.m)
    out = np.empty((points, inst.m))
    for p in range(points):
        x = rng.uniform(0.0, 1.0, size=inst.n) * upper
        X = np.tile(x, (inst.m, 1))
        expected = inst.stacked_map(X)[idx, idx]
        total = np.zeros(inst.m)
        for k in range(samples):
            total += inst.sampled_regularized_stack(X, 0.0, seed, path, p * samples + k)[idx, idx]
        out[p] = (total / samples - expected) / (noise.std / np.sqrt(samples))
    return out


def validate_setup(cfg: ExperimentConfig, *, unbiasedness_samples: int = 2000) -> ValidationReport:
    """
    Build all objects of ``cfg`` and check every verifiable assumption.

    Args:
        cfg: experiment configuration
        unbiasedness_samples: draws per point for the sampled-oracle check

    Returns:
        ValidationReport
    """
    report = ValidationReport(config_name=cfg.name, algorithm=cfg.algorithm)
    t = cfg.topology

    try:
        topology = topology_from_spec(t)
    except (OptNeqError, OSError) as exc:
        report.add("topology", False, detail=str(exc))
        return report
    source = t.kind.value if t.kind else t.edge_list
    shape = "directed" if topology.directed else "undirected"
    report.add("topology", True, measured=len(topology.edges), detail=f"{source}, m={topology.m}, {shape} edges")
    report.add("connected", is_connected(topology), hard=cfg.algorithm is Algorithm.IR_DSGT)

    # mixing matrices and spectra
    try:
        if cfg.algorithm is Algorithm.IR_PUSH_PULL:
            R = build_pull_matrix(topology, t.r, t.weighting)
            C = build_push_matrix(topology, t.c, t.weighting)
            report.add("R row-stochastic", R.row_deviation() <= STOCHASTIC_TOL, measured=R.row_deviation())
            report.add("C column-stochastic", C.column_deviation() <= STOCHASTIC_TOL, measured=C.column_deviation())
            report.add("root intersection", check_root_intersection(R, C))
            spec = spectral_report(R=R, C=C)
            report.add("sigma_R < 1", spec.sigma_r < 1, measured=spec.sigma_r)
            report.add("sigma_C < 1", spec.sigma_c < 1, measured=spec.sigma_c)
        else:
            W = build_gossip_matrix(topology)
            report.add("W doubly stochastic", W.deviation() <= STOCHASTIC_TOL, measured=W.deviation())
            spec = spectral_report(W=W)
            report.add(f"rho_W < 1 - {RHO_MARGIN:g}", spec.rho_w < 1 - RHO_MARGIN, measured=spec.rho_w)
    except OptNeqError as exc:
        report.add("mixing matrices", False, detail=str(exc))

    # problem
    inst = None
    try:
        params, inst = build_problem(cfg)
        sym = 0.5 * (params.c_bar + params.c_bar.T)
        lam_min = float(np.linalg.eigvalsh(sym).min())
        report.add("F monotone (PSD C_bar)", lam_min >= -PSD_TOL, measured=lam_min)
        report.add("welfare loss strongly convex", inst.mu_f > 0, measured=inst.mu_f,
                   detail=f"theta={params.theta_reg:.6g}")
    except OptNeqError as exc:
        report.add("problem", False, detail=str(exc))

    # schedules
    for variant in cfg.schedule.variants:
        sched_report = validate_schedule(cfg.schedule.params(variant, cfg.mode))
        failed = [c.name for c in sched_report.checks if not c.passed]
        detail = "; ".join(c.detail for c in sched_report.checks)
        report.add(f"schedule {variant.label}", not failed,
                   detail=detail if not failed else f"violates {', '.join(failed)} ({detail})")
    report.notes.extend(sched_report.notes)
    multipliers = cfg.schedule.agent_multipliers
    if multipliers is not None:
        report.add("agent multipliers", len(multipliers) == topology.m, measured=len(multipliers),
                   detail=f"one per agent, m={topology.m}")
        if cfg.algorithm is Algorithm.IR_DSGT:
            report.notes.append("IR-DSGT shares gamma_k across agents: agent multipliers are ignored")

    # sampled oracle
    if inst is not None and inst.stochastic:
        z = unbiasedness_zscores(inst, unbiasedness_samples, cfg.seed, path=cfg.paths)
        z_crit = NormalDist().inv_cdf(1.0 - UNBIASED_FAMILY_ALPHA / (2 * z.size))
        report.add("sampled oracle unbiased", np.max(np.abs(z)) <= z_crit,
                   measured=float(np.max(np.abs(z))), detail=f"max |z| vs {z_crit:.3f} over {z.size} coordinates")
    elif inst is not None:
        report.notes.append("deterministic oracles: unbiasedness check not applicable")

    logger.info("validation of %s: %s", cfg.name, "passed" if report.passed else "failed")
    return report
