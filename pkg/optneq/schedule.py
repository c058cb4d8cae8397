"""
Stepsize and regularization schedules.

    gamma_k  = gamma_hat / (k + Gamma)^a
    lambda_k = lambda    / (k + Gamma)^b
    Lambda_k = 1 - ((k + Gamma) / (k + 1 + Gamma))^b     (= |1 - lambda_{k+1}/lambda_k|)

IR-Push-Pull needs a > b > 0, a + b < 1, 2a + 3b < 2; IR-DSGT needs
a > b > 0, 3a + b < 2. Both need Gamma >= 1.
"""

from __future__ import annotations

from enum import Enum
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import ConfigurationError


class AlgorithmMode(str, Enum):
    PUSH_PULL = "push_pull"
    DSGT = "dsgt"


class ScheduleParams(BaseModel):
    """Parameters of the diminishing stepsize / regularization sequences."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma_hat: float = Field(1.0, gt=0, description="Stepsize coefficient gamma_hat.")
    lambda_coef: float = Field(1.0, gt=0, description="Regularization coefficient lambda.")
    big_gamma: float = Field(10.0, gt=0, description="Offset Gamma (must be >= 1 to be valid).")
    a: float = Field(..., gt=0, lt=1, description="Stepsize decay exponent.")
    b: float = Field(..., gt=0, lt=1, description="Regularization decay exponent.")
    mode: AlgorithmMode = AlgorithmMode.PUSH_PULL
    agent_multipliers: tuple[float, ...] | None = Field(
        None, description="Per-agent stepsize multipliers in (0, 1]; uniform when omitted."
    )

    @field_validator("agent_multipliers")
    @classmethod
    def _multipliers_in_range(cls, value):
        if value is not None and any(not (0.0 < w <= 1.0) for w in value):
            raise ValueError("agent multipliers must lie in (0, 1]")
        return value


class ScheduleValues(NamedTuple):
    gamma: float
    lam: float
    big_lambda: float


def _big_lambda(k, big_gamma: float, b: float):
    # 1 - (1 - 1/(k+1+Gamma))^b without cancellation
    return -np.expm1(b * np.log1p(-1.0 / (k + 1.0 + big_gamma)))


def schedule_at(p: ScheduleParams, k: int) -> ScheduleValues:
    """gamma_k, lambda_k and Lambda_k at iteration ``k >= 0``."""
    shift = k + p.big_gamma
    return ScheduleValues(
        gamma=p.gamma_hat / shift ** p.a,
        lam=p.lambda_coef / shift ** p.b,
        big_lambda=float(_big_lambda(k, p.big_gamma, p.b)),
    )


def schedule_arrays(p: ScheduleParams, ks: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``schedule_at`` over an array of iteration indices."""
    ks = np.asarray(ks, dtype=float)
    shift = ks + p.big_gamma
    return p.gamma_hat / shift ** p.a, p.lambda_coef / shift ** p.b, _big_lambda(ks, p.big_gamma, p.b)


def step_sizes(p: ScheduleParams, k: int, m: int) -> np.ndarray:
    """Per-agent stepsizes gamma_{i,k}."""
    gamma = schedule_at(p, k).gamma
    if p.agent_multipliers is None:
        return np.full(m, gamma)
    if len(p.agent_multipliers) != m:
        raise ConfigurationError(
            f"{len(p.agent_multipliers)} agent multipliers given for {m} agents",
            assumption="one stepsize multiplier per agent",
        )
    return gamma * np.asarray(p.agent_multipliers, dtype=float)


# ============================================================================
# VALIDATION
# ============================================================================
class ScheduleCheck(BaseModel):
    name: str
    passed: bool
    detail: str


class ScheduleReport(BaseModel):
    mode: AlgorithmMode
    checks: list[ScheduleCheck]
    notes: list[str] = []

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def validate_schedule(p: ScheduleParams) -> ScheduleReport:
    """Evaluate every exponent inequality of the chosen method plus Gamma >= 1."""
    a, b = p.a, p.b
    checks = [ScheduleCheck(name="a > b > 0", passed=a > b > 0, detail=f"a={a:g}, b={b:g}")]
    if p.mode is AlgorithmMode.PUSH_PULL:
        checks.append(ScheduleCheck(name="a + b < 1", passed=a + b < 1, detail=f"a+b={a + b:g}"))
        checks.append(ScheduleCheck(name="2a + 3b < 2", passed=2 * a + 3 * b < 2, detail=f"2a+3b={2 * a + 3 * b:g}"))
    else:
        checks.append(ScheduleCheck(name="3a + b < 2", passed=3 * a + b < 2, detail=f"3a+b={3 * a + b:g}"))
    checks.append(ScheduleCheck(name="Gamma >= 1", passed=p.big_gamma >= 1, detail=f"Gamma={p.big_gamma:g}"))

    notes = ["Lower bounds on Gamma that depend on unknown problem constants are not enforceable and were not checked."]
    if p.agent_multipliers is not None:
        notes.append(f"heterogeneous stepsizes: multiplier range [{min(p.agent_multipliers):g}, 1]")
    return ScheduleReport(mode=p.mode, checks=checks, notes=notes)
