"""
Communication Networks and Mixing Matrices

Builds the four network topologies used by the experiments, turns them into
pull (row-stochastic), push (column-stochastic) and gossip (doubly
stochastic) mixing matrices, and checks the structural and spectral
conditions the two gradient-tracking methods rely on.

Edge convention: an edge ``(j, i)`` means information flows from ``j`` to
``i``, i.e. agent ``i`` pulls from agent ``j``. Self-loops are never stored;
the matrix builders add the self-weights.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Literal, Sequence

import networkx as nx
import numpy as np

from .errors import AssumptionError, CapacityError, ConfigurationError, NumericalError
from .settings import settings

logger = logging.getLogger(__name__)

STOCHASTIC_TOL = 1e-12

Weighting = Literal["uniform", "max_degree"]


# ============================================================================
# TOPOLOGIES
# ============================================================================
class TopologyKind(str, Enum):
    """Network families used by the experiment presets."""

    STAR_DIGRAPH = "star_digraph"
    RANDOM_DIGRAPH = "random_digraph"
    PETERSEN = "petersen"
    RANDOM_UNDIRECTED = "random_undirected"


@dataclass(frozen=True)
class Topology:
    """
    Node/edge structure of a communication graph.

    Attributes:
        m: number of nodes, labelled ``0 .. m-1``
        edges: sorted, de-duplicated ``(j, i)`` pairs (``j -> i``)
        directed: ``False`` means every edge is stored in both directions
    """

    m: int
    edges: tuple[tuple[int, int], ...]
    directed: bool

    def __post_init__(self):
        edges = tuple(sorted({(int(j), int(i)) for j, i in self.edges}))
        object.__setattr__(self, "edges", edges)

        if self.m < 1:
            raise AssumptionError(f"topology needs at least one node, got m={self.m}")
        for j, i in edges:
            if j == i:
                raise AssumptionError(f"self-loop ({j},{i}) is not allowed in a topology")
            if not (0 <= j < self.m and 0 <= i < self.m):
                raise AssumptionError(f"edge ({j},{i}) has a node outside [0, {self.m})")
        if not self.directed:
            edge_set = set(edges)
            missing = [(i, j) for j, i in edges if (i, j) not in edge_set]
            if missing:
                raise AssumptionError(f"undirected topology is missing reverse edges, e.g. {missing[0]}")

    @cached_property
    def adjacency(self) -> np.ndarray:
        """``A[i, j] = 1`` iff ``i`` pulls from ``j``."""
        A = np.zeros((self.m, self.m))
        for j, i in self.edges:
            A[i, j] = 1.0
        A.setflags(write=False)
        return A

    @property
    def in_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def out_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=0)

    @property
    def undirected_edge_count(self) -> int:
        """Number of distinct unordered node pairs joined by an edge."""
        return len({tuple(sorted(e)) for e in self.edges})

    def in_neighbors(self, i: int) -> list[int]:
        return [j for j, target in self.edges if target == i]

    def out_neighbors(self, j: int) -> list[int]:
        return [i for source, i in self.edges if source == j]

    def to_networkx(self) -> nx.DiGraph:
        G = nx.DiGraph()
        G.add_nodes_from(range(self.m))
        G.add_edges_from(self.edges)
        return G

    def to_edge_list(self) -> str:
        """
        Serialize to the edge-list text format.

        First line ``"<m> directed|undirected"``, then one ``"j i"`` line per
        edge. Undirected graphs list each pair once with ``j < i``.
        """
        lines = [f"{self.m} {'directed' if self.directed else 'undirected'}"]
        for j, i in self.edges:
            if self.directed or j < i:
                lines.append(f"{j} {i}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edge_list(cls, text: str) -> "Topology":
        """Parse the format written by ``to_edge_list``."""
        rows = [(n, line.split()) for n, line in enumerate(text.splitlines(), start=1) if line.strip()]
        header = rows[0][1] if rows else []
        if len(header) != 2 or header[1] not in ("directed", "undirected") or not _is_int(header[0]):
            raise AssumptionError("edge list must start with '<m> directed|undirected'")
        m, directed = int(header[0]), header[1] == "directed"
        edges: list[tuple[int, int]] = []
        for n, row in rows[1:]:
            if len(row) != 2 or not all(_is_int(tok) for tok in row):
                raise AssumptionError(f"edge list line {n}: expected '<from> <to>', got {' '.join(row)!r}")
            j, i = int(row[0]), int(row[1])
            edges.append((j, i))
            if not directed:
                edges.append((i, j))
        return cls(m=m, edges=tuple(edges), directed=directed)


def _is_int(token: str) -> bool:
    return token.isdecimal()


def _random_tree_pairs(m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Random attachment tree: node i hooks onto a uniformly drawn earlier node."""
    return [(int(rng.integers(0, i)), i) for i in range(1, m)]


def build_topology(
    kind: TopologyKind | str,
    m: int = 10,
    edge_target: int | None = None,
    seed: int = 0,
) -> Topology:
    """
    Build one of the experiment topologies.

    Args:
        kind: topology family
        m: node count (ignored for the Petersen graph, which always has 10)
        edge_target: number of distinct directed edges (RandomDigraph) or
            undirected pairs (RandomUndirected); defaults to floor(m ln m)
        seed: RNG seed; the same seed always yields the same edge set

    Returns:
        Topology: the generated graph

    Raises:
        CapacityError: edge_target cannot be realised on m nodes
    """
    kind = TopologyKind(kind)

    if kind is TopologyKind.PETERSEN:
        if m != 10:
            logger.debug("Petersen graph has 10 nodes; ignoring m=%d", m)
        pairs = list(nx.petersen_graph().edges())
        edges = [(j, i) for j, i in pairs] + [(i, j) for j, i in pairs]
        return Topology(m=10, edges=tuple(edges), directed=False)

    if m < 2:
        raise ConfigurationError(f"{kind.value} needs m >= 2, got m={m}")

    if kind is TopologyKind.STAR_DIGRAPH:
        # hub 0 linked both ways to every leaf keeps the digraph strongly connected
        edges = [(0, leaf) for leaf in range(1, m)] + [(leaf, 0) for leaf in range(1, m)]
        return Topology(m=m, edges=tuple(edges), directed=True)

    rng = np.random.default_rng(seed)
    if edge_target is None:
        edge_target = int(math.floor(m * math.log(m)))

    if kind is TopologyKind.RANDOM_DIGRAPH:
        capacity = m * (m - 1)
        floor_edges = 2 * (m - 1)
        if edge_target > capacity:
            raise CapacityError(f"{edge_target} directed edges exceed the capacity m(m-1)={capacity}")
        if edge_target < floor_edges:
            raise CapacityError(
                f"{edge_target} directed edges cannot hold the bidirectional spanning tree ({floor_edges} edges)"
            )
        present: set[tuple[int, int]] = set()
        for parent, child in _random_tree_pairs(m, rng):
            present.update({(parent, child), (child, parent)})
        candidates = [(j, i) for j in range(m) for i in range(m) if j != i and (j, i) not in present]
        need = edge_target - len(present)
        if need > 0:
            picks = rng.choice(len(candidates), size=need, replace=False)
            present.update(candidates[p] for p in sorted(picks))
        return Topology(m=m, edges=tuple(present), directed=True)

    # RANDOM_UNDIRECTED
    capacity = m * (m - 1) // 2
    if edge_target > capacity:
        raise CapacityError(f"{edge_target} undirected edges exceed the capacity m(m-1)/2={capacity}")
    if edge_target < m - 1:
        raise CapacityError(f"{edge_target} undirected edges cannot hold a spanning tree ({m - 1} edges)")
    pairs = {tuple(sorted(p)) for p in _random_tree_pairs(m, rng)}
    candidates = [(j, i) for j in range(m) for i in range(j + 1, m) if (j, i) not in pairs]
    need = edge_target - len(pairs)
    if need > 0:
        picks = rng.choice(len(candidates), size=need, replace=False)
        pairs.update(candidates[p] for p in sorted(picks))
    edges = [(j, i) for j, i in pairs] + [(i, j) for j, i in pairs]
    return Topology(m=m, edges=tuple(edges), directed=False)


def is_connected(t: Topology) -> bool:
    """Strong connectivity for digraphs, ordinary connectivity otherwise."""
    G = t.to_networkx()
    if t.directed:
        return nx.is_strongly_connected(G)
    return nx.is_connected(G.to_undirected())


# ============================================================================
# MIXING MATRICES
# ============================================================================
class MixingKind(str, Enum):
    """Stochasticity type of a mixing matrix."""

    ROW = "row"
    COLUMN = "column"
    DOUBLY = "doubly"

    def satisfies(self, required: "MixingKind") -> bool:
        """A doubly stochastic matrix can stand in for either one-sided kind."""
        return self is required or self is MixingKind.DOUBLY


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """
    Nonnegative m x m weights of one communication round.

    The constructor copies ``entries``, freezes the copy and rejects anything
    that breaks the invariants of ``kind``.
    """

    entries: np.ndarray
    kind: MixingKind

    def __post_init__(self):
        a = np.array(self.entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise AssumptionError(f"mixing matrix must be square, got shape {a.shape}")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "kind", MixingKind(self.kind))

        if np.any(a < 0):
            raise AssumptionError("mixing matrix has negative entries")
        if np.any(np.diag(a) <= 0):
            raise AssumptionError("mixing matrix needs a strictly positive diagonal")
        row_dev, col_dev = self.row_deviation(), self.column_deviation()
        if self.kind in (MixingKind.ROW, MixingKind.DOUBLY) and row_dev > STOCHASTIC_TOL:
            raise AssumptionError(f"rows do not sum to 1 (max deviation {row_dev:.3e})")
        if self.kind in (MixingKind.COLUMN, MixingKind.DOUBLY) and col_dev > STOCHASTIC_TOL:
            raise AssumptionError(f"columns do not sum to 1 (max deviation {col_dev:.3e})")
        if self.kind is MixingKind.DOUBLY and np.max(np.abs(a - a.T)) > STOCHASTIC_TOL:
            raise AssumptionError("doubly stochastic gossip matrix must be symmetric")

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def row_deviation(self) -> float:
        return float(np.max(np.abs(self.entries.sum(axis=1) - 1.0)))

    def column_deviation(self) -> float:
        return float(np.max(np.abs(self.entries.sum(axis=0) - 1.0)))

    def deviation(self) -> float:
        """Max stochasticity error for the sums this kind promises."""
        if self.kind is MixingKind.ROW:
            return self.row_deviation()
        if self.kind is MixingKind.COLUMN:
            return self.column_deviation()
        return max(self.row_deviation(), self.column_deviation())


def _per_node(values: float | Sequence[float], m: int, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(values, dtype=float), (m,)).copy()
    if np.any(arr <= 0):
        raise ConfigurationError(f"{name} must be strictly positive")
    return arr


def build_pull_matrix(
    t: Topology,
    self_weights: float | Sequence[float] = 1.0,
    weighting: Weighting = "uniform",
) -> MixingMatrix:
    """
    Row-stochastic pull matrix R.

    ``uniform``: R_ij = 1/(|N_in(i)| + r_i) for in-neighbours, R_ii = r_i/(|N_in(i)| + r_i).
    ``max_degree``: R_ij = alpha for in-neighbours, R_ii = 1 - alpha |N_in(i)|,
    alpha = 1/(2 d_max) with d_max the largest in-degree.
    """
    A = np.asarray(t.adjacency)
    deg = A.sum(axis=1)
    if weighting == "uniform":
        r = _per_node(self_weights, t.m, "self_weights")
        R = A / (deg + r)[:, None]
        np.fill_diagonal(R, r / (deg + r))
    elif weighting == "max_degree":
        alpha = 1.0 / (2.0 * max(deg.max(), 1.0))
        R = alpha * A
        np.fill_diagonal(R, 1.0 - alpha * deg)
    else:
        raise ConfigurationError(f"unknown weighting scheme {weighting!r}")
    return MixingMatrix(R, MixingKind.ROW)


def build_push_matrix(
    t: Topology,
    self_weights: float | Sequence[float] = 1.0,
    weighting: Weighting = "uniform",
) -> MixingMatrix:
    """Column-stochastic push matrix C, the out-neighbour mirror of ``build_pull_matrix``."""
    A = np.asarray(t.adjacency)
    deg = A.sum(axis=0)
    if weighting == "uniform":
        c = _per_node(self_weights, t.m, "self_weights")
        C = A / (deg + c)[None, :]
        np.fill_diagonal(C, c / (deg + c))
    elif weighting == "max_degree":
        alpha = 1.0 / (2.0 * max(deg.max(), 1.0))
        C = alpha * A
        np.fill_diagonal(C, 1.0 - alpha * deg)
    else:
        raise ConfigurationError(f"unknown weighting scheme {weighting!r}")
    return MixingMatrix(C, MixingKind.COLUMN)


def build_gossip_matrix(t: Topology) -> MixingMatrix:
    """
    Doubly stochastic W = I - alpha L with max-degree weights alpha = 1/(2 d_max).

    Raises:
        AssumptionError: the topology is directed or disconnected
    """
    if t.directed:
        raise AssumptionError("gossip weights need an undirected topology")
    if not is_connected(t):
        raise AssumptionError("gossip weights need a connected topology")
    A = np.asarray(t.adjacency)
    deg = A.sum(axis=1)
    laplacian = np.diag(deg) - A
    alpha = 1.0 / (2.0 * max(deg.max(), 1.0))
    return MixingMatrix(np.eye(t.m) - alpha * laplacian, MixingKind.DOUBLY)


# ============================================================================
# ROOTS AND ROOT INTERSECTION
# ============================================================================
def root_sets(t: Topology) -> frozenset[int]:
    """Nodes from which every other node is reachable along directed paths."""
    G = t.to_networkx()
    return frozenset(r for r in range(t.m) if len(nx.descendants(G, r)) == t.m - 1)


def induced_topology(B: MixingMatrix | np.ndarray) -> Topology:
    """Digraph G_B with ``(j, i)`` present iff ``B[i, j] > 0`` and ``i != j``."""
    entries = B.entries if isinstance(B, MixingMatrix) else np.asarray(B, dtype=float)
    rows, cols = np.nonzero(entries > 0)
    edges = tuple((int(j), int(i)) for i, j in zip(rows, cols) if i != j)
    return Topology(m=entries.shape[0], edges=edges, directed=True)


def check_root_intersection(R: MixingMatrix, C: MixingMatrix) -> bool:
    """Whether the root sets of G_R and G_{C^T} share a node."""
    if R.m != C.m:
        raise AssumptionError(f"R is {R.m}x{R.m} but C is {C.m}x{C.m}")
    if not R.kind.satisfies(MixingKind.ROW) or not C.kind.satisfies(MixingKind.COLUMN):
        raise ConfigurationError("root intersection expects a row-stochastic R and a column-stochastic C")
    shared = root_sets(induced_topology(R)) & root_sets(induced_topology(C.entries.T))
    return bool(shared)


# ============================================================================
# SPECTRAL CHECKS
# ============================================================================
@dataclass(frozen=True, eq=False)
class SpectralReport:
    """
    Perron vectors and contraction factors of the mixing matrices.

    u is the left Perron vector of R (u R = u, u.1 = m), v the right Perron
    vector of C (C v = v, 1.v = m). sigma_r / sigma_c are spectral radii of
    the deflated matrices; rho_w is the spectral norm of W - 11^T/m.
    """

    u: np.ndarray | None
    v: np.ndarray | None
    sigma_r: float | None
    sigma_c: float | None
    rho_w: float | None
    residual_u: float | None = None
    residual_v: float | None = None


def perron_vector(
    A: np.ndarray,
    *,
    max_iter: int | None = None,
    tol: float | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, float]:
    """
    Fixed vector of a nonnegative column-stochastic matrix by power iteration.

    Returns the vector scaled to sum to m together with the residual
    ``||A x - x||_inf``.

    Raises:
        NumericalError: successive iterates did not settle within ``max_iter``
    """
    max_iter = settings.power_max_iter if max_iter is None else max_iter
    tol = settings.power_tol if tol is None else tol
    A = np.asarray(A, dtype=float)
    m = A.shape[0]

    rng = np.random.default_rng(seed)
    x = rng.uniform(0.5, 1.5, size=m)
    x /= x.sum()
    converged = False
    for _ in range(max_iter):
        y = A @ x
        y /= y.sum()
        step = np.max(np.abs(y - x))
        x = y
        if step <= tol:
            converged = True
            break

    x = m * x
    residual = float(np.max(np.abs(A @ x - x)))
    if not converged:
        raise NumericalError(f"power iteration did not converge in {max_iter} iterations", residual)
    return x, residual


def _deflated_radius(M: np.ndarray, left: np.ndarray, right: np.ndarray) -> float:
    m = M.shape[0]
    deflated = M - np.outer(right, left) / m
    return float(np.max(np.abs(np.linalg.eigvals(deflated))))


def spectral_report(
    R: MixingMatrix | None = None,
    C: MixingMatrix | None = None,
    W: MixingMatrix | None = None,
    *,
    seed: int = 0,
    max_iter: int | None = None,
    tol: float | None = None,
) -> SpectralReport:
    """
    Perron vectors and contraction factors for whichever matrices are given.

    A gossip matrix W also serves as R and C when those are omitted.

    Raises:
        NumericalError: a Perron vector failed its residual check
    """
    if R is None and C is None and W is None:
        raise ConfigurationError("spectral_report needs at least one mixing matrix")
    R = R if R is not None else W
    C = C if C is not None else W

    u = v = None
    sigma_r = sigma_c = rho_w = None
    res_u = res_v = None

    if R is not None:
        u, res_u = perron_vector(R.entries.T, max_iter=max_iter, tol=tol, seed=seed)
        if res_u > 1e-10 * R.m:
            raise NumericalError("left Perron vector of R failed its residual check", res_u)
        sigma_r = _deflated_radius(R.entries, u, np.ones(R.m))
    if C is not None:
        v, res_v = perron_vector(C.entries, max_iter=max_iter, tol=tol, seed=seed + 1)
        if res_v > 1e-10 * C.m:
            raise NumericalError("right Perron vector of C failed its residual check", res_v)
        sigma_c = _deflated_radius(C.entries, np.ones(C.m), v)
    if W is not None:
        rho_w = float(np.linalg.norm(W.entries - np.full((W.m, W.m), 1.0 / W.m), 2))

    logger.debug("spectral report: sigma_r=%s sigma_c=%s rho_w=%s", sigma_r, sigma_c, rho_w)
    return SpectralReport(u=u, v=v, sigma_r=sigma_r, sigma_c=sigma_c, rho_w=rho_w,
                          residual_u=res_u, residual_v=res_v)


def edges_from_pairs(m: int, pairs: Iterable[tuple[int, int]], directed: bool) -> Topology:
    """Convenience builder for hand-written graphs (chains, toy networks)."""
    pairs = list(pairs)
    if not directed:
        pairs = pairs + [(i, j) for j, i in pairs]
    return Topology(m=m, edges=tuple(pairs), directed=directed)
