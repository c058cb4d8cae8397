"""
Iteratively Regularized Gradient Tracking

Two single-loop methods drive every agent's copy x_i towards the optimal
Nash equilibrium while the regularization weight lambda_k decays:

    IR-Push-Pull (directed networks, deterministic oracles)
        X_{k+1} = R (X_k - Gamma_k Y_k)
        Y_{k+1} = C Y_k + G_{k+1}(X_{k+1}) - G_k(X_k)

    IR-DSGT (undirected networks, sampled oracles)
        X_{k+1} = W (X_k - gamma_k Y_k)
        Y_{k+1} = W Y_k + G_{k+1}(X_{k+1}, xi_{k+1}) - G_k(X_k, xi_k)

where row i of G_k is F_i(x_i) + lambda_k grad f_i(x_i). The previous G is
cached on the state and never re-evaluated (a DSGT draw must not be redrawn).

The reference oracle solves each Tikhonov problem VI(R^n, F + lambda grad f)
to tolerance and follows the solutions as lambda shrinks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, Literal, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .graph import MixingKind, MixingMatrix, check_root_intersection, induced_topology, is_connected
from .problem import ProblemInstance
from .schedule import AlgorithmMode, ScheduleParams, schedule_at, step_sizes, validate_schedule

logger = logging.getLogger(__name__)

TikhonovMethod = Literal["forward", "extragradient", "newton"]


# ============================================================================
# STATE
# ============================================================================
@dataclass(frozen=True, eq=False)
class SolverState:
    """
    One synchronized round of the network.

    Attributes:
        X: m x n decision copies (row i = x_{i,k})
        Y: m x n trackers (row i = y_{i,k})
        k: iteration counter
        last_g: stacked regularized map evaluated at X (with the xi_k draw for DSGT)
    """

    X: np.ndarray
    Y: np.ndarray
    k: int
    last_g: np.ndarray


def initial_point(inst: ProblemInstance, seed: int) -> np.ndarray:
    """Seeded x_{i,0}: uniform on [0, cap_j] per coordinate ([0, 1] without caps)."""
    rng = np.random.default_rng(seed)
    upper = inst.upper if inst.upper is not None else np.ones(inst.n)
    return rng.uniform(0.0, 1.0, size=(inst.m, inst.n)) * upper[None, :]


def tracking_deviation(s: SolverState) -> float:
    """Gap between the column means of Y and last_g, scaled by max(1, ||Y||_F, ||last_g||_F)."""
    gap = np.max(np.abs(s.Y.mean(axis=0) - s.last_g.mean(axis=0)))
    scale = max(1.0, float(np.linalg.norm(s.Y)), float(np.linalg.norm(s.last_g)))
    return float(gap / scale)


def _check_x0(inst: ProblemInstance, x0: np.ndarray) -> np.ndarray:
    X = np.array(x0, dtype=float, copy=True)
    if X.shape != (inst.m, inst.n):
        raise ConfigurationError(f"initial point has shape {X.shape}, expected {(inst.m, inst.n)}")
    return X


def _check_finite(k: int, previous: SolverState, *arrays: np.ndarray) -> None:
    if all(np.all(np.isfinite(a)) for a in arrays):
        return
    max_abs = float(max(np.max(np.abs(previous.X)), np.max(np.abs(previous.Y))))
    logger.warning("iterates became non-finite at k=%d", k)
    raise DivergenceError(k, max_abs)


def _require_schedule(sched: ScheduleParams, mode: AlgorithmMode) -> None:
    report = validate_schedule(sched.model_copy(update={"mode": mode}))
    failed = [c for c in report.checks if not c.passed]
    if failed:
        details = "; ".join(f"{c.name} ({c.detail})" for c in failed)
        raise ConfigurationError(f"schedule rejected: {details}", assumption=f"{mode.value} schedule exponents")


# ============================================================================
# IR-PUSH-PULL
# ============================================================================
def init_push_pull(
    inst: ProblemInstance,
    sched: ScheduleParams,
    R: MixingMatrix,
    C: MixingMatrix,
    x0: np.ndarray,
    *,
    strict: bool = True,
) -> SolverState:
    """
    Initial state: X = x0, Y = G_0(x0), last_g = Y, k = 0.

    Args:
        strict: also enforce the schedule exponent conditions (mixing-matrix
            and root checks are always enforced)

    Raises:
        ConfigurationError: a precondition fails; the message names the assumption
    """
    if not R.kind.satisfies(MixingKind.ROW):
        raise ConfigurationError(f"R is {R.kind.value}-stochastic", assumption="row-stochastic R")
    if not C.kind.satisfies(MixingKind.COLUMN):
        raise ConfigurationError(f"C is {C.kind.value}-stochastic", assumption="column-stochastic C")
    if R.m != inst.m or C.m != inst.m:
        raise ConfigurationError(f"mixing matrices are {R.m}/{C.m} wide for {inst.m} agents")
    if not check_root_intersection(R, C):
        raise ConfigurationError("root sets of G_R and G_C^T are disjoint", assumption="root intersection")
    if strict:
        _require_schedule(sched, AlgorithmMode.PUSH_PULL)

    X = _check_x0(inst, x0)
    G = inst.regularized_stack(X, schedule_at(sched, 0).lam)
    _check_finite(0, SolverState(X, X, 0, X), G)
    return SolverState(X=X, Y=G.copy(), k=0, last_g=G)


def step_push_pull(
    s: SolverState,
    R: MixingMatrix,
    C: MixingMatrix,
    sched: ScheduleParams,
    inst: ProblemInstance,
    gammas: np.ndarray | None = None,
) -> SolverState:
    """
    One IR-Push-Pull round.

    ``gammas`` overrides the per-agent stepsizes of iteration k (e.g. zeros
    to isolate the mixing).

    Raises:
        DivergenceError: a non-finite entry appeared
    """
    g = step_sizes(sched, s.k, inst.m) if gammas is None else np.asarray(gammas, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        X_new = R.entries @ (s.X - g[:, None] * s.Y)
        G_new = inst.regularized_stack(X_new, schedule_at(sched, s.k + 1).lam)
        Y_new = C.entries @ s.Y + G_new - s.last_g
    _check_finite(s.k + 1, s, X_new, Y_new)
    return SolverState(X=X_new, Y=Y_new, k=s.k + 1, last_g=G_new)


def run_push_pull(
    inst: ProblemInstance,
    sched: ScheduleParams,
    R: MixingMatrix,
    C: MixingMatrix,
    x0: np.ndarray,
    iterations: int,
    *,
    strict: bool = True,
) -> Iterator[SolverState]:
    """Yield the states for k = 0 .. iterations."""
    s = init_push_pull(inst, sched, R, C, x0, strict=strict)
    yield s
    for _ in range(iterations):
        s = step_push_pull(s, R, C, sched, inst)
        yield s


# ============================================================================
# IR-DSGT
# ============================================================================
def init_dsgt(
    inst: ProblemInstance,
    sched: ScheduleParams,
    W: MixingMatrix,
    x0: np.ndarray,
    seed: int,
    path: int,
    *,
    strict: bool = True,
) -> SolverState:
    """
    Initial state with Y = G_0(x0, xi_0) sampled from the (seed, path) stream.

    Raises:
        ConfigurationError: W is not doubly stochastic, its graph is disconnected,
            or the schedule violates the DSGT exponent conditions
    """
    if W.kind is not MixingKind.DOUBLY:
        raise ConfigurationError(f"W is {W.kind.value}-stochastic", assumption="doubly stochastic W")
    if W.m != inst.m:
        raise ConfigurationError(f"W is {W.m} wide for {inst.m} agents")
    if not is_connected(induced_topology(W)):
        raise ConfigurationError("graph of W is disconnected", assumption="connected undirected network")
    if strict:
        _require_schedule(sched, AlgorithmMode.DSGT)

    X = _check_x0(inst, x0)
    G = inst.sampled_regularized_stack(X, schedule_at(sched, 0).lam, seed, path, 0)
    _check_finite(0, SolverState(X, X, 0, X), G)
    return SolverState(X=X, Y=G.copy(), k=0, last_g=G)


def step_dsgt(
    s: SolverState,
    W: MixingMatrix,
    sched: ScheduleParams,
    inst: ProblemInstance,
    seed: int,
    path: int,
) -> SolverState:
    """One IR-DSGT round with fresh draws xi_{k+1}; all agents share gamma_k."""
    gamma = schedule_at(sched, s.k).gamma
    with np.errstate(over="ignore", invalid="ignore"):
        X_new = W.entries @ (s.X - gamma * s.Y)
        G_new = inst.sampled_regularized_stack(X_new, schedule_at(sched, s.k + 1).lam, seed, path, s.k + 1)
        Y_new = W.entries @ s.Y + G_new - s.last_g
    _check_finite(s.k + 1, s, X_new, Y_new)
    return SolverState(X=X_new, Y=Y_new, k=s.k + 1, last_g=G_new)


def run_dsgt(
    inst: ProblemInstance,
    sched: ScheduleParams,
    W: MixingMatrix,
    x0: np.ndarray,
    iterations: int,
    seed: int,
    path: int,
    *,
    strict: bool = True,
) -> Iterator[SolverState]:
    """Yield the states of one sample path for k = 0 .. iterations."""
    s = init_dsgt(inst, sched, W, x0, seed, path, strict=strict)
    yield s
    for _ in range(iterations):
        s = step_dsgt(s, W, sched, inst, seed, path)
        yield s


# ============================================================================
# TIKHONOV ORACLE
# ============================================================================
@dataclass(frozen=True, eq=False)
class TikhonovResult:
    """Approximate x*_lambda; ``converged`` is False when max_iters ran out first."""

    x: np.ndarray
    residual: float
    converged: bool
    iterations: int
    stepsize: float | None
    lam: float


@dataclass(frozen=True, eq=False)
class OracleStage:
    lam: float
    x: np.ndarray
    residual: float
    tolerance: float
    converged: bool


@dataclass(frozen=True, eq=False)
class OracleSolution:
    """Sequential-regularization estimate of x* with its lambda trajectory."""

    x_star: np.ndarray
    trajectory: list[OracleStage] = field(default_factory=list)
    tolerances: tuple[float, ...] = ()
    converged: bool = True

    @property
    def gaps(self) -> np.ndarray:
        """||x*_{lambda_j} - x*_{lambda_{j-1}}|| along the sweep."""
        xs = [stage.x for stage in self.trajectory]
        return np.array([np.linalg.norm(b - a) for a, b in zip(xs, xs[1:])])

    def to_dict(self) -> dict:
        return {
            "x_star": self.x_star.tolist(),
            "converged": self.converged,
            "tolerances": list(self.tolerances),
            "trajectory": [
                {"lambda": st.lam, "x": st.x.tolist(), "residual": st.residual,
                 "tolerance": st.tolerance, "converged": st.converged}
                for st in self.trajectory
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OracleSolution":
        return cls(
            x_star=np.asarray(data["x_star"], dtype=float),
            trajectory=[
                OracleStage(lam=st["lambda"], x=np.asarray(st["x"], dtype=float), residual=st["residual"],
                            tolerance=st["tolerance"], converged=st["converged"])
                for st in data["trajectory"]
            ],
            tolerances=tuple(data["tolerances"]),
            converged=data["converged"],
        )


def _residual_map(inst: ProblemInstance, lam: float):
    return lambda z: inst.total_map(z) + lam * inst.total_grad(z)


def estimate_lipschitz(H, x0: np.ndarray, samples: int = 24, seed: int = 0) -> float:
    """
    Largest sampled difference quotient ||H(z1) - H(z2)|| / ||z1 - z2|| around x0.

    Pairs are drawn at several radii so that piecewise-linear pieces away from
    x0 are also seen.
    """
    rng = np.random.default_rng(seed)
    base = max(1.0, float(np.linalg.norm(x0)))
    best = 0.0
    for t in range(samples):
        radius = base * 10.0 ** (t % 4 - 2)
        z1 = x0 + radius * rng.standard_normal(x0.shape)
        z2 = z1 + radius * rng.standard_normal(x0.shape)
        dz = np.linalg.norm(z1 - z2)
        if dz > 0:
            best = max(best, float(np.linalg.norm(H(z1) - H(z2)) / dz))
    return best


def _fd_jacobian(H, z: np.ndarray, h0: float = 1e-6) -> np.ndarray:
    n = z.size
    J = np.empty((n, n))
    for j in range(n):
        h = h0 * max(1.0, abs(z[j]))
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (H(z + e) - H(z - e)) / (2.0 * h)
    return J


def tikhonov_solve(
    inst: ProblemInstance,
    lam: float,
    tol: float = 1e-10,
    max_iters: int = 100_000,
    stepsize: float | Literal["auto"] = "auto",
    *,
    method: TikhonovMethod = "forward",
    x0: np.ndarray | None = None,
) -> TikhonovResult:
    """
    Solve F(z) + lam * grad f(z) = 0 to ``tol``.

    Args:
        inst: problem whose expected map F and gradient grad f are used
        lam: regularization weight (> 0)
        tol: target residual ||F(z) + lam grad f(z)||
        max_iters: iteration cap
        stepsize: fixed step or "auto" (forward: lam mu_f / L^2, extragradient: 1 / L,
            with L twice the sampled difference-quotient estimate)
        method: "forward", "extragradient" or damped "newton"
        x0: warm start (zeros by default)

    Returns:
        TikhonovResult with the best iterate; converged=False if max_iters ran out
    """
    if lam <= 0:
        raise ConfigurationError(f"Tikhonov weight must be positive, got {lam}")
    H = _residual_map(inst, lam)
    z = np.zeros(inst.n) if x0 is None else np.array(x0, dtype=float, copy=True)

    if method == "newton":
        def jacobian(point):
            J = inst.total_jacobian(point, lam)
            return _fd_jacobian(H, point) if J is None else J

        return _newton(H, jacobian, z, lam, tol, max_iters)

    if stepsize == "auto":
        L = 2.0 * max(estimate_lipschitz(H, z), 1e-12)
        if method == "forward":
            s = lam * max(inst.mu_f, 1e-12) / L ** 2
        else:
            s = 1.0 / L
    else:
        s = float(stepsize)

    hz = H(z)
    res = float(np.linalg.norm(hz))
    best_z, best_res = z, res
    it = 0
    while it < max_iters and res > tol:
        it += 1
        if method == "forward":
            z_new = z - s * hz
        elif method == "extragradient":
            z_new = z - s * H(z - s * hz)
        else:
            raise ConfigurationError(f"unknown Tikhonov method {method!r}")
        hz_new = H(z_new)
        res_new = float(np.linalg.norm(hz_new))
        if not np.isfinite(res_new) or res_new > 1e3 * max(best_res, tol):
            # overshoot: restart from the best point with half the step
            s *= 0.5
            z, hz, res = best_z, H(best_z), best_res
            continue
        z, hz, res = z_new, hz_new, res_new
        if res < best_res:
            best_z, best_res = z, res

    converged = best_res <= tol
    if not converged:
        logger.debug("Tikhonov %s solve stopped at residual %.3e (lambda=%.3e)", method, best_res, lam)
    return TikhonovResult(x=best_z, residual=best_res, converged=converged, iterations=it, stepsize=s, lam=lam)


def _newton(H, jacobian, z: np.ndarray, lam: float, tol: float, max_iters: int) -> TikhonovResult:
    """Damped semismooth Newton on the residual with backtracking."""
    hz = H(z)
    res = float(np.linalg.norm(hz))
    it = 0
    while it < max_iters and res > tol:
        it += 1
        J = jacobian(z)
        d = np.linalg.lstsq(J, -hz, rcond=None)[0]
        t = 1.0
        while True:
            z_try = z + t * d
            h_try = H(z_try)
            r_try = float(np.linalg.norm(h_try))
            if r_try <= (1.0 - 1e-4 * t) * res or t < 1e-12:
                break
            t *= 0.5
        if r_try >= res:
            break
        z, hz, res = z_try, h_try, r_try
    return TikhonovResult(x=z, residual=res, converged=res <= tol, iterations=it, stepsize=None, lam=lam)


def geometric_lambdas(start: float, stop: float, count: int) -> np.ndarray:
    """Strictly decreasing geometric lambda sweep from ``start`` to ``stop``."""
    if not start > stop > 0 or count < 2:
        raise ConfigurationError("a lambda sweep needs start > stop > 0 and at least two stages")
    return np.geomspace(start, stop, count)


def sequential_regularization(
    inst: ProblemInstance,
    lambdas: Sequence[float],
    tols: Sequence[float] | float,
    *,
    method: TikhonovMethod = "newton",
    max_iters: int = 100_000,
    x0: np.ndarray | None = None,
) -> OracleSolution:
    """
    Warm-started Tikhonov sweep; the last x*_lambda estimates x*.

    Stages that miss their tolerance are logged and flagged, and the sweep
    continues from the best iterate.
    """
    lambdas = [float(v) for v in lambdas]
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])) or any(v <= 0 for v in lambdas):
        raise ConfigurationError("lambda sequence must be positive and strictly decreasing")
    tols = [float(tols)] * len(lambdas) if np.isscalar(tols) else [float(t) for t in tols]
    if len(tols) != len(lambdas):
        raise ConfigurationError(f"{len(tols)} tolerances for {len(lambdas)} lambda stages")

    z = np.zeros(inst.n) if x0 is None else np.asarray(x0, dtype=float)
    stages: list[OracleStage] = []
    for lam, tol in zip(lambdas, tols):
        result = tikhonov_solve(inst, lam, tol, max_iters, method=method, x0=z)
        if not result.converged:
            logger.warning("Tikhonov stage lambda=%.3e missed tolerance %.1e (residual %.3e)",
                           lam, tol, result.residual)
        stages.append(OracleStage(lam=lam, x=result.x, residual=result.residual,
                                  tolerance=tol, converged=result.converged))
        z = result.x

    logger.info("sequential regularization finished at lambda=%.3e", lambdas[-1])
    return OracleSolution(
        x_star=z.copy(),
        trajectory=stages,
        tolerances=tuple(tols),
        converged=all(st.converged for st in stages),
    )
