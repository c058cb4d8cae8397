"""
Topology, mixing-matrix and spectral tests.

Covers the four topology families, the pull / push / gossip weight rules,
root sets and root intersection, and the Perron vectors and contraction
factors reported by ``spectral_report``.
"""

import math

import numpy as np
import pytest

from optneq.errors import AssumptionError, CapacityError, ConfigurationError
from optneq.graph import (
    STOCHASTIC_TOL,
    MixingKind,
    MixingMatrix,
    Topology,
    TopologyKind,
    build_gossip_matrix,
    build_pull_matrix,
    build_push_matrix,
    build_topology,
    check_root_intersection,
    edges_from_pairs,
    induced_topology,
    is_connected,
    perron_vector,
    root_sets,
    spectral_report,
)


# ============================================================================
# TOPOLOGIES
# ============================================================================
def test_star_with_two_nodes_is_a_bidirectional_pair():
    t = build_topology(TopologyKind.STAR_DIGRAPH, m=2)
    assert t.edges == ((0, 1), (1, 0))
    assert t.directed


def test_star_hub_reaches_every_leaf_both_ways():
    t = build_topology("star_digraph", m=10)
    assert len(t.edges) == 18
    assert t.in_degrees[0] == 9
    assert np.all(t.in_degrees[1:] == 1)
    assert is_connected(t)


def test_random_digraph_has_exactly_the_requested_edges():
    target = math.floor(100 * math.log(100))
    t = build_topology(TopologyKind.RANDOM_DIGRAPH, m=100, edge_target=target, seed=7)
    assert target == 460
    assert len(t.edges) == 460
    assert is_connected(t)


def test_random_graphs_are_deterministic_in_their_seed():
    a = build_topology(TopologyKind.RANDOM_DIGRAPH, m=30, seed=11)
    b = build_topology(TopologyKind.RANDOM_DIGRAPH, m=30, seed=11)
    c = build_topology(TopologyKind.RANDOM_DIGRAPH, m=30, seed=12)
    assert a.edges == b.edges
    assert a.edges != c.edges


def test_random_undirected_counts_unordered_pairs():
    t = build_topology(TopologyKind.RANDOM_UNDIRECTED, m=100, edge_target=460, seed=3)
    assert not t.directed
    assert t.undirected_edge_count == 460
    assert len(t.edges) == 920
    assert is_connected(t)


def test_petersen_graph_is_three_regular_with_fifteen_edges():
    t = build_topology(TopologyKind.PETERSEN)
    assert t.m == 10
    assert t.undirected_edge_count == 15
    assert np.all(t.in_degrees == 3)


def test_edge_targets_beyond_capacity_are_rejected():
    with pytest.raises(CapacityError):
        build_topology(TopologyKind.RANDOM_DIGRAPH, m=3, edge_target=7)
    with pytest.raises(CapacityError):
        build_topology(TopologyKind.RANDOM_UNDIRECTED, m=4, edge_target=7)
    with pytest.raises(CapacityError):
        build_topology(TopologyKind.RANDOM_UNDIRECTED, m=6, edge_target=3)


def test_topology_rejects_self_loops_and_missing_reverse_edges():
    with pytest.raises(AssumptionError):
        Topology(m=3, edges=((1, 1),), directed=True)
    with pytest.raises(AssumptionError):
        Topology(m=3, edges=((0, 1),), directed=False)
    with pytest.raises(AssumptionError):
        Topology(m=2, edges=((0, 5),), directed=True)


def test_edge_list_text_round_trip():
    t = build_topology(TopologyKind.RANDOM_UNDIRECTED, m=12, seed=5)
    text = t.to_edge_list()
    assert text.splitlines()[0] == "12 undirected"
    assert Topology.from_edge_list(text) == t


def test_malformed_edge_list_header_is_rejected():
    with pytest.raises(AssumptionError):
        Topology.from_edge_list("3 sideways\n0 1\n")
    with pytest.raises(AssumptionError):
        Topology.from_edge_list("three undirected\n0 1\n")


@pytest.mark.parametrize("text", ["3 undirected\n0\n1 2\n", "3 directed\n0 x\n", "3 directed\n0 1 2\n"])
def test_malformed_edge_rows_name_the_line(text):
    with pytest.raises(AssumptionError, match="line 2"):
        Topology.from_edge_list(text)


# ============================================================================
# MIXING MATRICES
# ============================================================================
def test_pull_weights_for_one_in_neighbour():
    t = edges_from_pairs(2, [(0, 1)], directed=True)
    R = build_pull_matrix(t, self_weights=1.0)
    np.testing.assert_allclose(R.entries[1], [0.5, 0.5])
    np.testing.assert_allclose(R.entries[0], [1.0, 0.0])


def test_two_node_pair_gives_half_weights_everywhere():
    t = build_topology(TopologyKind.STAR_DIGRAPH, m=2)
    np.testing.assert_allclose(build_pull_matrix(t).entries, np.full((2, 2), 0.5))
    np.testing.assert_allclose(build_push_matrix(t).entries, np.full((2, 2), 0.5))


def test_push_sink_keeps_its_whole_mass():
    t = edges_from_pairs(2, [(0, 1)], directed=True)
    C = build_push_matrix(t, self_weights=2.0)
    assert C.entries[1, 1] == pytest.approx(1.0)
    np.testing.assert_allclose(C.entries[:, 0], [2.0 / 3.0, 1.0 / 3.0])


def test_max_degree_pull_weights_on_the_star():
    t = build_topology(TopologyKind.STAR_DIGRAPH, m=10)
    R = build_pull_matrix(t, weighting="max_degree")
    assert R.entries[0, 0] == pytest.approx(0.5)
    assert R.entries[3, 3] == pytest.approx(1.0 - 1.0 / 18.0)
    assert R.row_deviation() <= STOCHASTIC_TOL


def test_petersen_gossip_weights():
    W = build_gossip_matrix(build_topology(TopologyKind.PETERSEN))
    assert np.allclose(np.diag(W.entries), 0.5)
    off = W.entries[W.entries > 0]
    assert np.allclose(np.sort(off)[:30], 1.0 / 6.0)
    assert W.deviation() <= STOCHASTIC_TOL


def test_path_graph_gossip_diagonal():
    t = edges_from_pairs(3, [(0, 1), (1, 2)], directed=False)
    W = build_gossip_matrix(t)
    np.testing.assert_allclose(np.diag(W.entries), [0.75, 0.5, 0.75])


def test_gossip_rejects_disconnected_and_directed_graphs():
    with pytest.raises(AssumptionError):
        build_gossip_matrix(edges_from_pairs(4, [(0, 1), (2, 3)], directed=False))
    with pytest.raises(AssumptionError):
        build_gossip_matrix(build_topology(TopologyKind.STAR_DIGRAPH, m=4))


def test_generated_matrices_hold_their_invariants():
    t = build_topology(TopologyKind.RANDOM_DIGRAPH, m=40, seed=2)
    R, C = build_pull_matrix(t), build_push_matrix(t)
    assert R.row_deviation() <= STOCHASTIC_TOL
    assert C.column_deviation() <= STOCHASTIC_TOL
    assert np.all(np.diag(R.entries) > 0) and np.all(np.diag(C.entries) > 0)
    assert np.all(R.entries >= 0) and np.all(C.entries >= 0)


def test_mixing_matrix_rejects_bad_entries():
    with pytest.raises(AssumptionError):
        MixingMatrix(np.array([[1.5, -0.5], [0.5, 0.5]]), MixingKind.ROW)
    with pytest.raises(AssumptionError):
        MixingMatrix(np.array([[0.0, 1.0], [0.5, 0.5]]), MixingKind.ROW)
    with pytest.raises(AssumptionError):
        MixingMatrix(np.array([[0.6, 0.6], [0.5, 0.5]]), MixingKind.ROW)
    with pytest.raises(AssumptionError):
        MixingMatrix(np.array([[0.5, 0.5], [0.4, 0.6]]), MixingKind.COLUMN)


def test_mixing_matrix_entries_are_frozen():
    source = np.full((2, 2), 0.5)
    R = MixingMatrix(source, MixingKind.ROW)
    source[0, 0] = 9.0
    assert R.entries[0, 0] == 0.5
    with pytest.raises(ValueError):
        R.entries[0, 0] = 1.0


def test_doubly_stochastic_satisfies_either_side():
    assert MixingKind.DOUBLY.satisfies(MixingKind.ROW)
    assert MixingKind.DOUBLY.satisfies(MixingKind.COLUMN)
    assert not MixingKind.ROW.satisfies(MixingKind.COLUMN)


def test_nonpositive_self_weights_are_a_configuration_error():
    t = build_topology(TopologyKind.STAR_DIGRAPH, m=3)
    with pytest.raises(ConfigurationError):
        build_pull_matrix(t, self_weights=0.0)


# ============================================================================
# ROOTS
# ============================================================================
def test_root_sets():
    assert root_sets(build_topology(TopologyKind.STAR_DIGRAPH, m=5)) == frozenset(range(5))
    assert root_sets(edges_from_pairs(3, [(0, 1), (1, 2)], directed=True)) == frozenset({0})
    assert root_sets(Topology(m=2, edges=(), directed=True)) == frozenset()


def test_induced_topology_follows_positive_entries():
    R = build_pull_matrix(edges_from_pairs(3, [(0, 1), (1, 2)], directed=True))
    assert induced_topology(R).edges == ((0, 1), (1, 2))


def test_root_intersection_on_chains():
    R = build_pull_matrix(edges_from_pairs(3, [(0, 1), (1, 2)], directed=True))
    C_good = build_push_matrix(edges_from_pairs(3, [(2, 1), (1, 0)], directed=True))
    assert check_root_intersection(R, C_good)

    R2 = build_pull_matrix(edges_from_pairs(2, [(0, 1)], directed=True))
    C_bad = build_push_matrix(edges_from_pairs(2, [(0, 1)], directed=True))
    assert not check_root_intersection(R2, C_bad)


def test_root_intersection_holds_on_strongly_connected_graphs(star_rc):
    R, C = star_rc
    assert check_root_intersection(R, C)


# ============================================================================
# SPECTRA
# ============================================================================
def test_uniform_pair_has_flat_perron_vector_and_zero_contraction():
    t = build_topology(TopologyKind.STAR_DIGRAPH, m=2)
    rep = spectral_report(R=build_pull_matrix(t), C=build_push_matrix(t))
    np.testing.assert_allclose(rep.u, [1.0, 1.0], atol=1e-10)
    np.testing.assert_allclose(rep.v, [1.0, 1.0], atol=1e-10)
    assert rep.sigma_r <= 1e-12
    assert rep.sigma_c <= 1e-12


def test_doubly_stochastic_perron_vectors_are_ones(petersen_w):
    rep = spectral_report(W=petersen_w)
    np.testing.assert_allclose(rep.u, np.ones(10), atol=1e-10)
    np.testing.assert_allclose(rep.v, np.ones(10), atol=1e-10)


def test_petersen_gossip_contraction_is_two_thirds(petersen_w):
    # eigenvalues of I - L/6 are 1, 2/3 and 1/6
    assert spectral_report(W=petersen_w).rho_w == pytest.approx(2.0 / 3.0, abs=1e-10)


def test_star_perron_vectors_and_residuals(star_rc):
    R, C = star_rc
    rep = spectral_report(R=R, C=C)
    assert rep.u.sum() == pytest.approx(10.0)
    np.testing.assert_allclose(rep.u @ R.entries, rep.u, atol=1e-10)
    np.testing.assert_allclose(C.entries @ rep.v, rep.v, atol=1e-10)
    assert rep.u[0] == pytest.approx(50.0 / 14.0, rel=1e-9)
    assert rep.residual_u <= 1e-10 * 10
    assert 0.0 < rep.sigma_r < 1.0 and 0.0 < rep.sigma_c < 1.0


def test_perron_vector_of_a_chain_concentrates_on_the_root():
    R = build_pull_matrix(edges_from_pairs(2, [(0, 1)], directed=True))
    u, residual = perron_vector(R.entries.T)
    np.testing.assert_allclose(u, [2.0, 0.0], atol=1e-9)
    assert residual <= 1e-10


def test_spectral_report_needs_a_matrix():
    with pytest.raises(ConfigurationError):
        spectral_report()
