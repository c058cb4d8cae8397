"""
Experiment Configuration

An experiment is one JSON document validated by ``ExperimentConfig``:

    {
      "name": "star_pp",
      "algorithm": "ir_push_pull",
      "topology": {"kind": "star_digraph", "m": 10, "seed": 0},
      "schedule": {"gamma_hat": 1.0, "lambda_coef": 1.0, "big_gamma": 10.0,
                   "variants": [{"a": 0.5, "b": 0.3}, ...]},
      "problem": {"seed": 0, "eta": 0.1, "b_spec": {"kind": "gaussian_det", "mean": 0, "var": 10}},
      "iterations": 100000, "log_every": 100, "paths": 1, ...
    }

Unknown keys are rejected. ``build_setup`` turns a config into the concrete
topology, mixing matrices and Cournot instance.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigurationError
from .graph import (
    MixingMatrix,
    SpectralReport,
    Topology,
    TopologyKind,
    Weighting,
    build_gossip_matrix,
    build_pull_matrix,
    build_push_matrix,
    build_topology,
    spectral_report,
)
from .metrics import AverageKind
from .problem import BSpec, CournotParams, GaussianDet, ProblemInstance, UniformStoch, build_cournot
from .schedule import AlgorithmMode, ScheduleParams
from .solvers import TikhonovMethod

logger = logging.getLogger(__name__)


# ============================================================================
# CONFIG MODELS
# ============================================================================
class Algorithm(str, Enum):
    IR_PUSH_PULL = "ir_push_pull"
    IR_DSGT = "ir_dsgt"

    @property
    def mode(self) -> AlgorithmMode:
        return AlgorithmMode.PUSH_PULL if self is Algorithm.IR_PUSH_PULL else AlgorithmMode.DSGT


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TopologySpec(_Strict):
    kind: TopologyKind | None = Field(None, description="Generated family; omit when edge_list is given.")
    edge_list: str | None = Field(None, description="Path of an edge-list file describing a custom graph.")
    m: int = Field(10, ge=2, description="Node count (Petersen is always 10).")
    edge_target: int | None = Field(None, description="Edge count of random graphs; floor(m ln m) when omitted.")
    seed: int = Field(0, ge=0)
    r: float = Field(1.0, gt=0, description="Self-weight r_i of the pull matrix.")
    c: float = Field(1.0, gt=0, description="Self-weight c_i of the push matrix.")
    weighting: Weighting = "uniform"

    @model_validator(mode="after")
    def _one_source(self):
        if (self.kind is None) == (self.edge_list is None):
            raise ValueError("give exactly one of topology kind or edge_list")
        if self.kind is TopologyKind.PETERSEN and self.m != 10:
            raise ValueError("the Petersen graph has exactly 10 nodes")
        return self


class ScheduleVariant(_Strict):
    a: float = Field(..., gt=0, lt=1)
    b: float = Field(..., gt=0, lt=1)

    @property
    def label(self) -> str:
        return f"a{self.a:g}_b{self.b:g}"


class ScheduleSpec(_Strict):
    gamma_hat: float = Field(1.0, gt=0)
    lambda_coef: float = Field(1.0, gt=0)
    big_gamma: float = Field(10.0, gt=0)
    variants: list[ScheduleVariant] = Field(..., min_length=1)
    agent_multipliers: tuple[float, ...] | None = None

    def params(self, variant: ScheduleVariant, mode: AlgorithmMode) -> ScheduleParams:
        return ScheduleParams(
            gamma_hat=self.gamma_hat,
            lambda_coef=self.lambda_coef,
            big_gamma=self.big_gamma,
            a=variant.a,
            b=variant.b,
            mode=mode,
            agent_multipliers=self.agent_multipliers,
        )


class ProblemSpec(_Strict):
    """Cournot instance; the player count follows the topology."""

    rank: int | None = Field(None, ge=1, description="Rank of C; ceil(m/2) when omitted.")
    seed: int = Field(0, ge=0)
    eta: float = Field(0.1, gt=0)
    cap_range: tuple[float, float] = (50.0, 100.0)
    b_spec: BSpec = Field(default_factory=GaussianDet)
    factor_scale: float | None = Field(None, gt=0)
    theta_factor: float = Field(2.0, ge=0, description="Curvature factor of the theta rule.")

    @field_validator("cap_range")
    @classmethod
    def _caps_ordered(cls, value):
        lo, hi = value
        if not 0 < lo <= hi:
            raise ValueError("cap_range needs 0 < lo <= hi")
        return value


class OracleSpec(_Strict):
    """Sequential-regularization reference for x* and the Tikhonov metric."""

    enabled: bool = False
    lambda_start: float = Field(1.0, gt=0)
    lambda_stop: float = Field(1e-8, gt=0)
    stages: int = Field(9, ge=2)
    tol: float = Field(1e-9, gt=0)
    method: TikhonovMethod = "newton"
    max_iters: int = Field(500, ge=1)
    track_tikhonov: bool = Field(False, description="Fill dist_tikhonov at every logged checkpoint.")
    tikhonov_tol: float = Field(1e-8, gt=0)


class ExperimentConfig(_Strict):
    name: str = "experiment"
    algorithm: Algorithm
    topology: TopologySpec
    schedule: ScheduleSpec
    problem: ProblemSpec = Field(default_factory=ProblemSpec)
    iterations: int = Field(10_000, ge=0)
    log_every: int = Field(100, ge=1)
    paths: int = Field(1, ge=1, description="Sample paths per variant (DSGT).")
    seed: int = Field(0, ge=0, description="Seed of the sampled-coefficient streams.")
    init_seed: int = Field(0, ge=0, description="Seed of the initial point x_0.")
    oracle: OracleSpec = Field(default_factory=OracleSpec)
    average: AverageKind = Field("weighted", description="Network average used by the metrics.")
    output_dir: str | None = None
    workers: int | None = Field(None, ge=1)
    save_snapshots: bool = False
    registry: bool = False

    @model_validator(mode="after")
    def _cross_field(self):
        directed = self.topology.kind in (TopologyKind.STAR_DIGRAPH, TopologyKind.RANDOM_DIGRAPH)
        if self.topology.kind is not None and directed != (self.algorithm is Algorithm.IR_PUSH_PULL):
            logger.warning("config %r pairs %s with a %s topology", self.name, self.algorithm.value,
                           "directed" if directed else "undirected")
        if self.algorithm is Algorithm.IR_PUSH_PULL and self.paths > 1:
            logger.warning("IR-Push-Pull is deterministic; %d paths will be identical", self.paths)
        return self

    @property
    def mode(self) -> AlgorithmMode:
        return self.algorithm.mode


def load_config(path: str | Path) -> ExperimentConfig:
    return ExperimentConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2) + "\n"


# ============================================================================
# PRESETS
# ============================================================================
PP_VARIANTS = [(0.5, 0.3), (0.6, 0.25), (0.675, 0.2)]
DSGT_VARIANTS = [(0.5, 0.4), (0.55, 0.3), (0.6, 0.175)]


def _variants(pairs) -> list[ScheduleVariant]:
    return [ScheduleVariant(a=a, b=b) for a, b in pairs]


def _star_pp() -> ExperimentConfig:
    return ExperimentConfig(
        name="star_pp",
        algorithm=Algorithm.IR_PUSH_PULL,
        topology=TopologySpec(kind=TopologyKind.STAR_DIGRAPH, m=10, weighting="max_degree"),
        schedule=ScheduleSpec(variants=_variants(PP_VARIANTS)),
        problem=ProblemSpec(b_spec=GaussianDet(mean=0.0, var=10.0)),
        iterations=100_000,
    )


def _random_digraph_pp() -> ExperimentConfig:
    return ExperimentConfig(
        name="random_digraph_pp",
        algorithm=Algorithm.IR_PUSH_PULL,
        topology=TopologySpec(
            kind=TopologyKind.RANDOM_DIGRAPH,
            m=100,
            edge_target=math.floor(100 * math.log(100)),
            weighting="max_degree",
        ),
        schedule=ScheduleSpec(variants=_variants(PP_VARIANTS)),
        problem=ProblemSpec(b_spec=GaussianDet(mean=0.0, var=10.0)),
        iterations=100_000,
    )


def _petersen_dsgt() -> ExperimentConfig:
    return ExperimentConfig(
        name="petersen_dsgt",
        algorithm=Algorithm.IR_DSGT,
        topology=TopologySpec(kind=TopologyKind.PETERSEN, m=10),
        schedule=ScheduleSpec(variants=_variants(DSGT_VARIANTS)),
        problem=ProblemSpec(b_spec=UniformStoch(lo=1.0, hi=10.0)),
        iterations=10_000,
        paths=10,
    )


def _random_undirected_dsgt() -> ExperimentConfig:
    return ExperimentConfig(
        name="random_undirected_dsgt",
        algorithm=Algorithm.IR_DSGT,
        topology=TopologySpec(kind=TopologyKind.RANDOM_UNDIRECTED, m=100,
                              edge_target=math.floor(100 * math.log(100))),
        schedule=ScheduleSpec(variants=_variants(DSGT_VARIANTS)),
        problem=ProblemSpec(b_spec=UniformStoch(lo=1.0, hi=10.0)),
        iterations=10_000,
        paths=10,
    )


PRESETS = {
    "StarPP": _star_pp,
    "RandomDigraphPP": _random_digraph_pp,
    "PetersenDSGT": _petersen_dsgt,
    "RandomUndirectedDSGT": _random_undirected_dsgt,
}


def preset(name: str) -> ExperimentConfig:
    """
    One of the four reference experiments.

    Raises:
        KeyError: unknown preset name (matching is case-insensitive)
    """
    for key, factory in PRESETS.items():
        if key.lower() == name.lower():
            return factory()
    raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")


# ============================================================================
# MATERIALIZATION
# ============================================================================
@dataclass(frozen=True, eq=False)
class ExperimentSetup:
    """Concrete objects of one experiment."""

    cfg: ExperimentConfig
    topology: Topology
    params: CournotParams
    inst: ProblemInstance
    R: MixingMatrix | None = None
    C: MixingMatrix | None = None
    W: MixingMatrix | None = None

    def spectral(self) -> SpectralReport:
        if self.W is not None:
            return spectral_report(W=self.W)
        return spectral_report(R=self.R, C=self.C)


def build_problem(cfg: ExperimentConfig) -> tuple[CournotParams, ProblemInstance]:
    spec = cfg.problem
    return build_cournot(
        cfg.topology.m,
        rank=spec.rank,
        seed=spec.seed,
        eta=spec.eta,
        cap_range=spec.cap_range,
        b_spec=spec.b_spec,
        factor_scale=spec.factor_scale,
        theta_factor=spec.theta_factor,
    )


def topology_from_spec(t: TopologySpec) -> Topology:
    """Generate the topology, or read it from its edge-list file."""
    if t.edge_list is None:
        return build_topology(t.kind, m=t.m, edge_target=t.edge_target, seed=t.seed)
    topology = Topology.from_edge_list(Path(t.edge_list).read_text(encoding="utf-8"))
    if topology.m != t.m:
        raise ConfigurationError(f"edge list {t.edge_list} has {topology.m} nodes but the config says m={t.m}")
    return topology


def build_setup(cfg: ExperimentConfig) -> ExperimentSetup:
    """
    Build topology, mixing matrices and problem for ``cfg``.

    Raises:
        OptNeqError: any builder rejects its inputs
    """
    t = cfg.topology
    topology = topology_from_spec(t)
    params, inst = build_problem(cfg)
    if cfg.algorithm is Algorithm.IR_PUSH_PULL:
        R = build_pull_matrix(topology, t.r, t.weighting)
        C = build_push_matrix(topology, t.c, t.weighting)
        return ExperimentSetup(cfg, topology, params, inst, R=R, C=C)
    W = build_gossip_matrix(topology)
    return ExperimentSetup(cfg, topology, params, inst, W=W)
