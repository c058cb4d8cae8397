"""
Error Metrics, Path Aggregation and Rate Fits

Per logged iteration k the runner records

    lower          ||F(xbar_k)||                 expected map at the network average
    upper          ||xbar_{k+1} - xbar_k||
    consensus_x    ||X_k - 1 xbar_k||_F
    consensus_y    ||Y_k - v ybar_k||_F (Push-Pull) or ||Y_k - 1 ybar_k||_F (DSGT)
    dist_tikhonov  ||xbar_k - x*_{lambda_k}||     when a Tikhonov tracker is attached
    dist_opt       ||xbar_k - x*||                when an oracle solution is attached

Rows travel as ``MetricRow`` objects in memory and as CSV on disk.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import pandas as pd

from .errors import AlignmentError, FitError
from .problem import ProblemInstance
from .schedule import AlgorithmMode, ScheduleParams, schedule_at
from .solvers import OracleSolution, SolverState, TikhonovMethod, tikhonov_solve

logger = logging.getLogger(__name__)

FIELDS = ("lower", "upper", "consensus_x", "consensus_y", "dist_tikhonov", "dist_opt")
CSV_COLUMNS = ("k",) + FIELDS

AverageKind = Literal["weighted", "uniform"]


@dataclass(frozen=True)
class MetricRow:
    k: int
    lower: float
    upper: float | None
    consensus_x: float
    consensus_y: float
    dist_tikhonov: float | None = None
    dist_opt: float | None = None


# ============================================================================
# PER-STATE METRICS
# ============================================================================
def network_average(X: np.ndarray, u: np.ndarray | None = None) -> np.ndarray:
    """xbar = u^T X / m; the plain row mean when ``u`` is None."""
    if u is None:
        return X.mean(axis=0)
    return (u @ X) / X.shape[0]


class TikhonovTracker:
    """
    Follows x*_{lambda_k} along the logged checkpoints.

    Every solve is warm-started from the previous point, so the points depend
    only on the sequence of requested lambdas.
    """

    def __init__(self, inst: ProblemInstance, tol: float = 1e-8, method: TikhonovMethod = "newton",
                 max_iters: int = 200):
        self.inst = inst
        self.tol = tol
        self.method = method
        self.max_iters = max_iters
        self._last: np.ndarray | None = None

    def point(self, lam: float) -> np.ndarray:
        result = tikhonov_solve(self.inst, lam, self.tol, self.max_iters, method=self.method, x0=self._last)
        if not result.converged:
            logger.warning("Tikhonov checkpoint at lambda=%.3e reached residual %.3e", lam, result.residual)
        self._last = result.x
        return result.x


def compute_metrics(
    s: SolverState,
    inst: ProblemInstance,
    sched: ScheduleParams,
    *,
    u: np.ndarray | None = None,
    v: np.ndarray | None = None,
    mode: AlgorithmMode = AlgorithmMode.PUSH_PULL,
    oracle: OracleSolution | None = None,
    tracker: TikhonovTracker | None = None,
    next_average: np.ndarray | None = None,
) -> MetricRow:
    """
    Metrics of one state.

    Args:
        s: state at iteration k
        inst: problem (its expected map defines ``lower``)
        sched: schedule, used for lambda_k when a tracker is attached
        u: averaging weights (Perron vector of R for weighted Push-Pull metrics)
        v: right Perron vector of C for the Push-Pull tracker consensus
        mode: algorithm that produced the state
        oracle: reference x* for ``dist_opt``
        tracker: Tikhonov tracker for ``dist_tikhonov``
        next_average: xbar_{k+1}, enabling ``upper``

    Returns:
        MetricRow
    """
    xbar = network_average(s.X, u)
    ybar = s.Y.mean(axis=0)
    if mode is AlgorithmMode.PUSH_PULL and v is not None:
        y_ref = np.outer(v, ybar)
    else:
        y_ref = np.broadcast_to(ybar, s.Y.shape)

    dist_tik = None
    if tracker is not None:
        dist_tik = float(np.linalg.norm(xbar - tracker.point(schedule_at(sched, s.k).lam)))

    return MetricRow(
        k=s.k,
        lower=float(np.linalg.norm(inst.total_map(xbar))),
        upper=None if next_average is None else float(np.linalg.norm(next_average - xbar)),
        consensus_x=float(np.linalg.norm(s.X - xbar[None, :])),
        consensus_y=float(np.linalg.norm(s.Y - y_ref)),
        dist_tikhonov=dist_tik,
        dist_opt=None if oracle is None else float(np.linalg.norm(xbar - oracle.x_star)),
    )


# ============================================================================
# CSV
# ============================================================================
def rows_to_frame(rows: Iterable[MetricRow]) -> pd.DataFrame:
    frame = pd.DataFrame([{f.name: getattr(r, f.name) for f in fields(MetricRow)} for r in rows],
                         columns=list(CSV_COLUMNS))
    frame["k"] = frame["k"].astype("int64")
    for name in FIELDS:
        frame[name] = pd.to_numeric(frame[name], errors="coerce").astype("float64")
    return frame


def frame_to_rows(frame: pd.DataFrame) -> list[MetricRow]:
    def _opt(value):
        return None if pd.isna(value) else float(value)

    return [
        MetricRow(k=int(r.k), lower=float(r.lower), upper=_opt(r.upper), consensus_x=float(r.consensus_x),
                  consensus_y=float(r.consensus_y), dist_tikhonov=_opt(r.dist_tikhonov), dist_opt=_opt(r.dist_opt))
        for r in frame.itertuples(index=False)
    ]


def write_metrics_csv(rows: Iterable[MetricRow] | pd.DataFrame, path: str | Path) -> Path:
    """Write the fixed-header CSV; missing oracle fields become empty cells."""
    frame = rows if isinstance(rows, pd.DataFrame) else rows_to_frame(rows)
    path = Path(path)
    frame.loc[:, list(CSV_COLUMNS)].to_csv(
        path, index=False, float_format="%.17g", na_rep="", lineterminator="\n"
    )
    return path


def read_metrics_csv(path: str | Path) -> pd.DataFrame:
    frame = pd.read_csv(path, dtype={"k": "int64"}, float_precision="round_trip")
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise AlignmentError(f"{path}: missing metric columns {missing}")
    return frame


# ============================================================================
# SAMPLE PATHS
# ============================================================================
@dataclass(frozen=True, eq=False)
class PathAggregate:
    """Per-k mean of several sample paths plus the pointwise min / max envelope."""

    mean: pd.DataFrame
    low: pd.DataFrame
    high: pd.DataFrame
    paths: int


def aggregate_paths(runs: Sequence[Sequence[MetricRow] | pd.DataFrame]) -> PathAggregate:
    """
    Average aligned sample-path logs.

    Raises:
        AlignmentError: runs are empty or logged at different k
    """
    frames = [r if isinstance(r, pd.DataFrame) else rows_to_frame(r) for r in runs]
    if not frames:
        raise AlignmentError("no sample paths to aggregate")
    ks = frames[0]["k"].to_numpy()
    for idx, frame in enumerate(frames[1:], start=1):
        if not np.array_equal(frame["k"].to_numpy(), ks):
            raise AlignmentError(f"sample path {idx} is logged at different iterations than path 0")

    stacked = pd.concat(frames, ignore_index=True)
    grouped = stacked.groupby("k", sort=False)[list(FIELDS)]
    out = []
    for reducer in ("mean", "min", "max"):
        agg = grouped.agg(reducer).reset_index()
        agg["k"] = agg["k"].astype("int64")
        out.append(agg.loc[:, list(CSV_COLUMNS)])
    return PathAggregate(mean=out[0], low=out[1], high=out[2], paths=len(frames))


# ============================================================================
# RATE FITS
# ============================================================================
@dataclass(frozen=True)
class RateFit:
    """
    Log-log decay fit of one metric over a window.

    bound_const is max_k e_k (k + shift)^p over the window; the first/second
    half constants take the same max over each half.
    """

    field: str
    window: tuple[int, int]
    exponent: float
    slope: float
    bound_const: float
    first_half_const: float
    second_half_const: float

    @property
    def bound_growth(self) -> float:
        return self.second_half_const / self.first_half_const

    def non_growing(self, tol: float = 0.05) -> bool:
        return self.bound_growth <= 1.0 + tol


def fit_decay(
    rows: Sequence[MetricRow] | pd.DataFrame,
    field: str,
    window: tuple[int, int],
    target_exponent: float,
    big_gamma: float,
) -> RateFit:
    """
    Fit log(e_k) against log(k + big_gamma) on ``window`` (inclusive).

    Pass ``big_gamma - 1`` as the shift for bounds stated in (k + Gamma - 1).

    Raises:
        FitError: fewer than two points in the window, or a nonpositive value
    """
    frame = rows if isinstance(rows, pd.DataFrame) else rows_to_frame(rows)
    if field not in FIELDS:
        raise FitError(f"unknown metric field {field!r}")
    lo, hi = window
    sel = frame[(frame["k"] >= lo) & (frame["k"] <= hi)]
    if len(sel) < 2:
        raise FitError(f"window [{lo}, {hi}] holds {len(sel)} logged rows; need at least 2")
    values = sel[field].to_numpy(dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise FitError(f"{field} has nonpositive or missing values in window [{lo}, {hi}]")

    shifted = sel["k"].to_numpy(dtype=float) + big_gamma
    slope = float(np.polyfit(np.log(shifted), np.log(values), 1)[0])
    scaled = values * shifted ** target_exponent
    mid = math.ceil(len(scaled) / 2)
    return RateFit(
        field=field,
        window=(int(lo), int(hi)),
        exponent=target_exponent,
        slope=slope,
        bound_const=float(scaled.max()),
        first_half_const=float(scaled[:mid].max()),
        second_half_const=float(scaled[mid:].max()),
    )


# ============================================================================
# SNAPSHOTS
# ============================================================================
def save_snapshots(path: str | Path, states: Sequence[SolverState], next_X: Sequence[np.ndarray]) -> Path:
    """Store logged states and their successors' X for later recomputation."""
    path = Path(path)
    np.savez_compressed(
        path,
        k=np.array([s.k for s in states], dtype=np.int64),
        X=np.stack([s.X for s in states]),
        Y=np.stack([s.Y for s in states]),
        last_g=np.stack([s.last_g for s in states]),
        next_X=np.stack(list(next_X)),
    )
    return path


def recompute_metrics(
    path: str | Path,
    inst: ProblemInstance,
    sched: ScheduleParams,
    *,
    u: np.ndarray | None = None,
    v: np.ndarray | None = None,
    mode: AlgorithmMode = AlgorithmMode.PUSH_PULL,
    oracle: OracleSolution | None = None,
    tracker: TikhonovTracker | None = None,
) -> list[MetricRow]:
    """Rebuild the metric rows from a snapshot file written by ``save_snapshots``."""
    with np.load(path) as data:
        ks, Xs, Ys, Gs, nXs = data["k"], data["X"], data["Y"], data["last_g"], data["next_X"]
    rows = []
    for k, X, Y, G, nX in zip(ks, Xs, Ys, Gs, nXs):
        state = SolverState(X=X, Y=Y, k=int(k), last_g=G)
        rows.append(compute_metrics(state, inst, sched, u=u, v=v, mode=mode, oracle=oracle, tracker=tracker,
                                    next_average=network_average(nX, u)))
    return rows

