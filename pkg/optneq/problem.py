"""
VI-Constrained Problems and the Smoothed Cournot Game

Each agent i holds a local map F_i (lower level: the equilibrium condition)
and a local loss f_i (upper level: the welfare loss). The network seeks the
solution of VI(R^n, sum F_i) that minimises sum f_i.

The concrete instance is a Cournot game whose box constraints are replaced by
a Moreau envelope:

    f_i(x) = 0.5 a_i x_i^2 + b_i x_i + (sum_{j != i} c_ij x_j) x_i
             + dist^2(x_i, [0, cap_i]) / (2 eta) + theta / (2m) ||x||^2
    F_i(x) = (a_i x_i + b_i + sum_{j != i} c_ij x_j + (x_i - clip(x_i)) / eta) e_i

In the stochastic variant b_i is redrawn each time it is used.
"""

from __future__ import annotations

import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Literal, NamedTuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigurationError

logger = logging.getLogger(__name__)


# ============================================================================
# NOISE / COEFFICIENT SPECIFICATIONS
# ============================================================================
class GaussianDet(BaseModel):
    """Deterministic b_i drawn once from N(mean, var)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["gaussian_det"] = "gaussian_det"
    mean: float = 0.0
    var: float = Field(10.0, ge=0, description="Variance (not standard deviation).")


class UniformStoch(BaseModel):
    """Stochastic b_i(xi) ~ U[lo, hi], redrawn at every use."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["uniform_stoch"] = "uniform_stoch"
    lo: float = 1.0
    hi: float = 10.0

    @model_validator(mode="after")
    def _ordered(self):
        if self.lo > self.hi:
            raise ValueError(f"uniform bounds out of order: lo={self.lo} > hi={self.hi}")
        return self

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def std(self) -> float:
        return (self.hi - self.lo) / math.sqrt(12.0)


BSpec = Annotated[Union[GaussianDet, UniformStoch], Field(discriminator="kind")]


class StreamKey(NamedTuple):
    """Identifies one noise draw: experiment seed, sample path, iteration, agent."""

    seed: int
    path: int
    k: int
    i: int


def noise_block(noise: UniformStoch, seed: int, path: int, k: int, m: int) -> np.ndarray:
    """
    The m coefficient draws of iteration k on a sample path.

    Philox is keyed by (seed, path) and positioned at counter block k, so a
    block can be regenerated in any order; agent i always receives entry i.
    """
    key = np.array([seed, path], dtype=np.uint64)
    counter = np.array([0, k, 0, 0], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key, counter=counter))
    return rng.uniform(noise.lo, noise.hi, size=m)


# ============================================================================
# MOREAU SMOOTHING
# ============================================================================
def moreau_grad(z, lo, hi, eta: float):
    """Gradient (z - clip(z, lo, hi)) / eta of the Moreau envelope of a box indicator."""
    out = (np.asarray(z, dtype=float) - np.clip(z, lo, hi)) / eta
    return float(out) if np.ndim(out) == 0 else out


def _box_distance(z, lo, hi):
    return np.asarray(z, dtype=float) - np.clip(z, lo, hi)


# ============================================================================
# COURNOT PARAMETERS
# ============================================================================
@dataclass(frozen=True, eq=False)
class CournotParams:
    """
    Coefficients of the smoothed Cournot game.

    c_bar has a_i on the diagonal and the coupling c_ij off it; b_bar holds the
    deterministic linear coefficients (the mean when ``noise`` is set).
    """

    c_bar: np.ndarray
    a_bar: np.ndarray
    b_bar: np.ndarray
    caps: np.ndarray
    eta: float
    theta_reg: float
    noise: UniformStoch | None = None

    def __post_init__(self):
        m = self.c_bar.shape[0]
        if self.c_bar.shape != (m, m) or any(v.shape != (m,) for v in (self.a_bar, self.b_bar, self.caps)):
            raise ConfigurationError("Cournot coefficient shapes do not agree")
        if self.eta <= 0:
            raise ConfigurationError(f"smoothing parameter eta must be positive, got {self.eta}")
        if np.any(self.caps <= 0):
            raise ConfigurationError("capacity bounds must be positive")

    @property
    def m(self) -> int:
        return self.c_bar.shape[0]

    @property
    def c_under(self) -> np.ndarray:
        """C_under = C_bar - 0.5 diag(a): the quadratic form of the welfare loss."""
        return self.c_bar - 0.5 * np.diag(self.a_bar)

    def to_dict(self) -> dict:
        return {
            "c_bar": self.c_bar.tolist(),
            "a_bar": self.a_bar.tolist(),
            "b_bar": self.b_bar.tolist(),
            "caps": self.caps.tolist(),
            "eta": self.eta,
            "theta_reg": self.theta_reg,
            "noise": self.noise.model_dump() if self.noise is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CournotParams":
        noise = data.get("noise")
        return cls(
            c_bar=np.asarray(data["c_bar"], dtype=float),
            a_bar=np.asarray(data["a_bar"], dtype=float),
            b_bar=np.asarray(data["b_bar"], dtype=float),
            caps=np.asarray(data["caps"], dtype=float),
            eta=float(data["eta"]),
            theta_reg=float(data["theta_reg"]),
            noise=UniformStoch.model_validate(noise) if noise is not None else None,
        )


def save_params(p: CournotParams, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(p.to_dict(), indent=2) + "\n", encoding="utf-8")
    return path


def load_params(path: str | Path) -> CournotParams:
    return CournotParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check_index(p: CournotParams, i: int) -> None:
    if not 0 <= i < p.m:
        raise IndexError(f"agent index {i} outside [0, {p.m})")


def _agent_value(p: CournotParams, i: int, x: np.ndarray, b: float | None) -> float:
    b_i = p.b_bar[i] if b is None else b
    return float(p.c_bar[i] @ x + b_i + moreau_grad(x[i], 0.0, p.caps[i], p.eta))


def cournot_map_F_i(p: CournotParams, i: int, x: np.ndarray, b: float | None = None) -> np.ndarray:
    """Local map F_i(x), supported on coordinate i. ``b`` overrides b_i (sampled variant)."""
    _check_index(p, i)
    x = np.asarray(x, dtype=float)
    out = np.zeros(p.m)
    out[i] = _agent_value(p, i, x, b)
    return out


def cournot_grad_f_i(p: CournotParams, i: int, x: np.ndarray, b: float | None = None) -> np.ndarray:
    """
    Full gradient of f_i in x.

    Coordinate i: a_i x_i + b_i + sum_{j != i} c_ij x_j + moreau + (theta/m) x_i.
    Coordinate j != i: c_ij x_i + (theta/m) x_j.
    """
    _check_index(p, i)
    x = np.asarray(x, dtype=float)
    out = p.c_bar[i] * x[i] + (p.theta_reg / p.m) * x
    out[i] = _agent_value(p, i, x, b) + (p.theta_reg / p.m) * x[i]
    return out


def cournot_objective_i(p: CournotParams, i: int, x: np.ndarray, b: float | None = None) -> float:
    """Closed-form f_i(x) including its theta/(2m) ||x||^2 share."""
    _check_index(p, i)
    x = np.asarray(x, dtype=float)
    b_i = p.b_bar[i] if b is None else b
    coupling = p.c_bar[i] @ x - p.c_bar[i, i] * x[i]
    dist = _box_distance(x[i], 0.0, p.caps[i])
    return float(
        0.5 * p.a_bar[i] * x[i] ** 2
        + b_i * x[i]
        + coupling * x[i]
        + dist ** 2 / (2.0 * p.eta)
        + p.theta_reg / (2.0 * p.m) * (x @ x)
    )


def compute_theta_reg(c_bar: np.ndarray, a_bar: np.ndarray, curvature_factor: float = 1.0) -> float:
    """
    Welfare regularisation weight theta = 1e-5 + max(0, -factor * lambda_min).

    lambda_min is the smallest eigenvalue of sym(C_under), C_under = C_bar - 0.5 diag(a).
    With ``curvature_factor=2`` the rule covers the full Hessian C_under + C_under^T of
    the welfare loss, which makes the regularised loss strongly convex.
    """
    c_bar = np.asarray(c_bar, dtype=float)
    a_bar = np.asarray(a_bar, dtype=float)
    if c_bar.shape != (a_bar.size, a_bar.size):
        raise ConfigurationError(f"C_bar shape {c_bar.shape} does not match {a_bar.size} players")
    c_under = c_bar - 0.5 * np.diag(a_bar)
    lam_min = float(np.linalg.eigvalsh(0.5 * (c_under + c_under.T)).min())
    return 1e-5 + max(0.0, -curvature_factor * lam_min)


# ============================================================================
# LOCAL ORACLES
# ============================================================================
class LocalOracle(ABC):
    """What agent i can evaluate about its own F_i and f_i."""

    @abstractmethod
    def local_map(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def local_grad(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def sampled_map(self, x: np.ndarray, xi: float | None) -> np.ndarray: ...

    @abstractmethod
    def sampled_grad(self, x: np.ndarray, xi: float | None) -> np.ndarray: ...

    @abstractmethod
    def local_objective(self, x: np.ndarray) -> float: ...


@dataclass(frozen=True, eq=False)
class CournotOracle(LocalOracle):
    """Player i of the smoothed Cournot game; xi is a draw of b_i."""

    params: CournotParams
    i: int

    def local_map(self, x):
        return cournot_map_F_i(self.params, self.i, x)

    def local_grad(self, x):
        return cournot_grad_f_i(self.params, self.i, x)

    def sampled_map(self, x, xi):
        return cournot_map_F_i(self.params, self.i, x, b=xi)

    def sampled_grad(self, x, xi):
        return cournot_grad_f_i(self.params, self.i, x, b=xi)

    def local_objective(self, x):
        return cournot_objective_i(self.params, self.i, x)


@dataclass(frozen=True, eq=False)
class AffineToyOracle(LocalOracle):
    """One of m equal shares of F(x) = A x and f(x) = 0.5 ||x - c||^2."""

    A: np.ndarray
    c: np.ndarray
    m: int

    def local_map(self, x):
        return self.A @ np.asarray(x, dtype=float) / self.m

    def local_grad(self, x):
        return (np.asarray(x, dtype=float) - self.c) / self.m

    def sampled_map(self, x, xi):
        return self.local_map(x)

    def sampled_grad(self, x, xi):
        return self.local_grad(x)

    def local_objective(self, x):
        d = np.asarray(x, dtype=float) - self.c
        return float(0.5 * (d @ d) / self.m)

    def map_jacobian(self, x):
        return self.A / self.m

    def grad_jacobian(self, x):
        return np.eye(len(self.c)) / self.m


# ============================================================================
# STACKED COURNOT EVALUATION
# ============================================================================
class CournotGame:
    """Vectorised evaluation of all players at once (row i = player i's copy)."""

    def __init__(self, params: CournotParams):
        self.params = params
        self.m = params.m
        self._idx = np.arange(self.m)
        self._c_off = params.c_bar - np.diag(np.diag(params.c_bar))
        self._theta_share = params.theta_reg / self.m

    def _values(self, X: np.ndarray, b: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        d = X[self._idx, self._idx]
        b = p.b_bar if b is None else b
        v = np.einsum("ij,ij->i", p.c_bar, X) + b + _box_distance(d, 0.0, p.caps) / p.eta
        return v, d

    def stacked_map(self, X: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        v, _ = self._values(X, b)
        out = np.zeros_like(X)
        out[self._idx, self._idx] = v
        return out

    def stacked_grad(self, X: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        v, d = self._values(X, b)
        out = self._c_off * d[:, None] + self._theta_share * X
        out[self._idx, self._idx] = v + self._theta_share * d
        return out

    def regularized_stack(self, X: np.ndarray, lam: float, b: np.ndarray | None = None) -> np.ndarray:
        v, d = self._values(X, b)
        out = lam * (self._c_off * d[:, None] + self._theta_share * X)
        out[self._idx, self._idx] = (1.0 + lam) * v + lam * self._theta_share * d
        return out

    def total_map(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        return p.c_bar @ x + p.b_bar + _box_distance(x, 0.0, p.caps) / p.eta

    def total_grad(self, x: np.ndarray) -> np.ndarray:
        p = self.params
        cu = p.c_under
        return (cu + cu.T) @ x + p.b_bar + _box_distance(x, 0.0, p.caps) / p.eta + p.theta_reg * x

    def total_jacobian(self, x: np.ndarray, lam: float) -> np.ndarray:
        """Generalized Jacobian of F + lam grad f; the Moreau term contributes 1/eta off the box."""
        p = self.params
        outside = ((x < 0.0) | (x > p.caps)).astype(float) / p.eta
        cu = p.c_under
        welfare = cu + cu.T + p.theta_reg * np.eye(self.m)
        return p.c_bar + lam * welfare + (1.0 + lam) * np.diag(outside)

    def objective(self, x: np.ndarray) -> float:
        p = self.params
        dist = _box_distance(x, 0.0, p.caps)
        return float(x @ p.c_under @ x + p.b_bar @ x + (dist @ dist) / (2.0 * p.eta)
                     + 0.5 * p.theta_reg * (x @ x))


# ============================================================================
# PROBLEM INSTANCE
# ============================================================================
@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """
    The m local oracles of one distributed problem.

    Attributes:
        m: agent count
        n: decision dimension
        oracles: one LocalOracle per agent
        noise: coefficient distribution of the stochastic variant, or None
        mu_f: strong convexity modulus of f = sum f_i
        params: Cournot coefficients when the instance is a Cournot game
        upper: per-coordinate upper box bounds used to draw initial points
    """

    m: int
    n: int
    oracles: tuple[LocalOracle, ...]
    noise: UniformStoch | None = None
    mu_f: float = 1.0
    params: CournotParams | None = None
    upper: np.ndarray | None = None
    name: str = "problem"
    _game: CournotGame | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.oracles) != self.m:
            raise ConfigurationError(f"{len(self.oracles)} oracles supplied for {self.m} agents")

    @property
    def stochastic(self) -> bool:
        return self.noise is not None and self.noise.hi > self.noise.lo

    def stacked_map(self, X: np.ndarray) -> np.ndarray:
        if self._game is not None:
            return self._game.stacked_map(X)
        return np.stack([o.local_map(X[i]) for i, o in enumerate(self.oracles)])

    def stacked_grad(self, X: np.ndarray) -> np.ndarray:
        if self._game is not None:
            return self._game.stacked_grad(X)
        return np.stack([o.local_grad(X[i]) for i, o in enumerate(self.oracles)])

    def regularized_stack(self, X: np.ndarray, lam: float) -> np.ndarray:
        """Rows F_i(x_i) + lam * grad f_i(x_i)."""
        if self._game is not None:
            return self._game.regularized_stack(X, lam)
        return np.stack([o.local_map(X[i]) + lam * o.local_grad(X[i]) for i, o in enumerate(self.oracles)])

    def sampled_regularized_stack(self, X: np.ndarray, lam: float, seed: int, path: int, k: int) -> np.ndarray:
        """Rows F_i(x_i, xi_{i,k}) + lam * grad f_i(x_i, xi_{i,k}) with one shared draw per agent."""
        if self.noise is None:
            return self.regularized_stack(X, lam)
        draws = noise_block(self.noise, seed, path, k, self.m)
        if self._game is not None:
            return self._game.regularized_stack(X, lam, b=draws)
        return np.stack([
            o.sampled_map(X[i], draws[i]) + lam * o.sampled_grad(X[i], draws[i])
            for i, o in enumerate(self.oracles)
        ])

    def total_map(self, x: np.ndarray) -> np.ndarray:
        """F(x) = sum_i F_i(x) (expected map in the stochastic variant)."""
        x = np.asarray(x, dtype=float)
        if self._game is not None:
            return self._game.total_map(x)
        return np.sum([o.local_map(x) for o in self.oracles], axis=0)

    def total_grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._game is not None:
            return self._game.total_grad(x)
        return np.sum([o.local_grad(x) for o in self.oracles], axis=0)

    def total_jacobian(self, x: np.ndarray, lam: float) -> np.ndarray | None:
        """Jacobian of F + lam grad f at x, or None when the oracles cannot supply one."""
        x = np.asarray(x, dtype=float)
        if self._game is not None:
            return self._game.total_jacobian(x, lam)
        if not all(hasattr(o, "map_jacobian") for o in self.oracles):
            return None
        return sum(o.map_jacobian(x) + lam * o.grad_jacobian(x) for o in self.oracles)

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        if self._game is not None:
            return self._game.objective(x)
        return float(sum(o.local_objective(x) for o in self.oracles))


def sample_local(inst: ProblemInstance, i: int, x: np.ndarray, key: StreamKey) -> tuple[np.ndarray, np.ndarray]:
    """
    One sampled evaluation (F_i(x, xi), grad f_i(x, xi)) for agent i.

    Both values use the same draw, and the same key always reproduces it.
    """
    oracle = inst.oracles[i]
    if inst.noise is None:
        return oracle.local_map(x), oracle.local_grad(x)
    xi = float(noise_block(inst.noise, key.seed, key.path, key.k, inst.m)[key.i])
    return oracle.sampled_map(x, xi), oracle.sampled_grad(x, xi)


def instance_from_params(params: CournotParams, name: str = "cournot") -> ProblemInstance:
    """Wrap Cournot coefficients into a ProblemInstance."""
    cu = params.c_under
    mu_f = float(np.linalg.eigvalsh(cu + cu.T).min()) + params.theta_reg
    if mu_f <= 0:
        logger.warning("welfare loss is not strongly convex (modulus %.3e); Tikhonov points may be non-unique", mu_f)
    return ProblemInstance(
        m=params.m,
        n=params.m,
        oracles=tuple(CournotOracle(params, i) for i in range(params.m)),
        noise=params.noise,
        mu_f=mu_f,
        params=params,
        upper=params.caps.copy(),
        name=name,
        _game=CournotGame(params),
    )


def build_cournot(
    m: int,
    rank: int | None = None,
    seed: int = 0,
    eta: float = 0.1,
    cap_range: tuple[float, float] = (50.0, 100.0),
    b_spec: GaussianDet | UniformStoch | None = None,
    factor_scale: float | None = None,
    theta_factor: float = 2.0,
) -> tuple[CournotParams, ProblemInstance]:
    """
    Draw a seeded Cournot instance.

    C = G^T G with G a rank x m Gaussian factor (entries N(0, factor_scale^2),
    default factor_scale = 1/sqrt(rank)); a_i = C_ii, c_ij = C_ij.

    Args:
        m: number of players
        rank: rank of C, must be < m (default ceil(m/2))
        seed: RNG seed; identical seeds give identical parameters
        eta: Moreau smoothing parameter
        cap_range: interval for the capacity bounds c_i^up
        b_spec: GaussianDet for fixed b_i, UniformStoch for sampled b_i(xi)
        factor_scale: standard deviation of the factor entries
        theta_factor: curvature factor passed to compute_theta_reg

    Returns:
        (CournotParams, ProblemInstance)
    """
    rank = math.ceil(m / 2) if rank is None else rank
    if not 0 < rank < m:
        raise ConfigurationError(f"rank must satisfy 0 < rank < m, got rank={rank}, m={m}")
    if eta <= 0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    b_spec = GaussianDet() if b_spec is None else b_spec
    scale = 1.0 / math.sqrt(rank) if factor_scale is None else factor_scale

    rng = np.random.default_rng(seed)
    G = rng.normal(0.0, scale, size=(rank, m))
    C = G.T @ G
    C = 0.5 * (C + C.T)
    a_bar = np.diag(C).copy()
    caps = rng.uniform(cap_range[0], cap_range[1], size=m)

    noise = None
    if isinstance(b_spec, GaussianDet):
        b_bar = rng.normal(b_spec.mean, math.sqrt(b_spec.var), size=m)
    else:
        b_bar = np.full(m, b_spec.mean)
        noise = b_spec

    params = CournotParams(
        c_bar=C,
        a_bar=a_bar,
        b_bar=b_bar,
        caps=caps,
        eta=eta,
        theta_reg=compute_theta_reg(C, a_bar, curvature_factor=theta_factor),
        noise=noise,
    )
    logger.debug("built Cournot instance m=%d rank=%d theta=%.4g", m, rank, params.theta_reg)
    return params, instance_from_params(params)


def build_skew_toy(A=None, c=None, m: int = 1) -> ProblemInstance:
    """
    Affine toy problem F(x) = A x, f(x) = 0.5 ||x - c||^2 shared by m agents.

    Defaults to the rotation A = [[0, 1], [-1, 0]] and c = (1, 1), whose
    lower-level solution set is {0}.
    """
    A = np.array([[0.0, 1.0], [-1.0, 0.0]]) if A is None else np.asarray(A, dtype=float)
    c = np.ones(A.shape[0]) if c is None else np.asarray(c, dtype=float)
    return ProblemInstance(
        m=m,
        n=A.shape[0],
        oracles=tuple(AffineToyOracle(A, c, m) for _ in range(m)),
        mu_f=1.0,
        name="skew_toy",
    )
