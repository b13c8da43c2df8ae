"""Graphs, Metropolis weights, and spectral statistics.

Closed-form eigenvalue oracles: with Metropolis weights every edge of the
line and cycle graphs carries weight 1/3 (all degree maxima are 2), so
I - W = L/3 with L the graph Laplacian, whose spectrum is known exactly:
line:  2 - 2 cos(pi k / n),   k = 0..n-1
cycle: 2 - 2 cos(2 pi k / n), k = 0..n-1
"""

import json

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from newtrack.topology import (Graph, MixingMatrix, ZERO_EIG_TOL,
                               build_topology, laplacian, metropolis_weights,
                               spectral_stats, topology_from_doc,
                               topology_to_doc)


def scipy_connected(graph):
    a = csr_matrix(graph.adjacency())
    ncomp, _ = connected_components(a, directed=False)
    return ncomp == 1


def line_eigs(n):
    return np.sort((2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)) / 3.0)


def cycle_eigs(n):
    return np.sort((2.0 / 3.0) * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n)))


# ---------------------------------------------------------------------------
# Graph construction and validation.
# ---------------------------------------------------------------------------

def test_complete_n3_edge_set():
    g = build_topology("complete", 3)
    assert g.edges == ((0, 1), (0, 2), (1, 2))


def test_line_n10_degrees():
    g = build_topology("line", 10)
    assert len(g.edges) == 9
    assert_array_equal(g.degrees, [1] + [2] * 8 + [1])


def test_cycle_degrees_all_two():
    g = build_topology("cycle", 10)
    assert len(g.edges) == 10
    assert_array_equal(g.degrees, np.full(10, 2))


def test_graph_rejects_self_loop_and_duplicates():
    with pytest.raises(ValueError):
        Graph(n=3, edges=((0, 0), (0, 1), (1, 2)))
    with pytest.raises(ValueError):
        Graph(n=3, edges=((0, 1), (0, 1), (1, 2)))
    with pytest.raises(ValueError):
        Graph(n=3, edges=((1, 0), (1, 2)))  # not canonical i < j


def test_graph_rejects_disconnected():
    with pytest.raises(ValueError):
        Graph(n=4, edges=((0, 1), (2, 3)))


def test_connectivity_matches_scipy_oracle():
    for seed in range(8):
        g = build_topology("random", 12, tau=0.25, seed=seed)
        assert scipy_connected(g)


def test_random_edge_count_seed7():
    # round-half-up of 0.5 * 45 = 22.5 edges
    g = build_topology("random", 10, tau=0.5, seed=7)
    assert len(g.edges) == 23


def test_random_edge_count_rounding():
    # 0.45 * 10 = 4.5 rounds up to 5 for n=5
    g = build_topology("random", 5, tau=0.45, seed=0)
    assert len(g.edges) == 5
    # tau at the tree threshold: 4 * (n-1) / (n (n-1)) target is exactly n-1
    g = build_topology("random", 5, tau=0.4, seed=0)
    assert len(g.edges) == 4


def test_random_rejects_budget_below_tree():
    with pytest.raises(ValueError):
        build_topology("random", 10, tau=0.1, seed=0)
    with pytest.raises(ValueError):
        build_topology("random", 10, tau=1.5, seed=0)
    with pytest.raises(ValueError):
        build_topology("random", 10, tau=0.5)  # seed required


def test_random_determinism_and_seed_sensitivity():
    g1 = build_topology("random", 15, tau=0.3, seed=4)
    g2 = build_topology("random", 15, tau=0.3, seed=4)
    g3 = build_topology("random", 15, tau=0.3, seed=5)
    assert g1.edges == g2.edges
    assert g1.edges != g3.edges


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        build_topology("star", 5)


# ---------------------------------------------------------------------------
# Metropolis weights.
# ---------------------------------------------------------------------------

def test_metropolis_complete_n10_uniform():
    mix = metropolis_weights(build_topology("complete", 10))
    assert_allclose(mix.w, np.full((10, 10), 0.1), atol=1e-15)


def test_metropolis_cycle_all_thirds():
    mix = metropolis_weights(build_topology("cycle", 10))
    g = build_topology("cycle", 10)
    for i, j in g.edges:
        assert mix.w[i, j] == 1.0 / 3.0
    assert_allclose(np.diag(mix.w), np.full(10, 1.0 / 3.0), atol=1e-15)


def test_metropolis_single_node():
    mix = metropolis_weights(build_topology("complete", 1))
    assert_array_equal(mix.w, [[1.0]])


def test_mixing_invariants_across_topologies():
    graphs = [build_topology("line", 10), build_topology("cycle", 10),
              build_topology("complete", 10)]
    graphs += [build_topology("random", 10, tau=0.5, seed=s) for s in range(5)]
    for g in graphs:
        mix = metropolis_weights(g)
        w = mix.w
        assert np.max(np.abs(w.sum(axis=1) - 1.0)) < 1e-12
        assert np.array_equal(w, w.T)
        assert np.min(w) >= 0.0
        lam = np.linalg.eigvalsh(w)
        assert lam[0] > -1.0
        # exactly one eigenvalue of I - W at zero for a connected graph
        assert np.sum(1.0 - lam < ZERO_EIG_TOL) == 1


def test_mixing_matrix_validation():
    bad = np.array([[0.5, 0.6], [0.6, 0.5]])
    with pytest.raises(ValueError):
        MixingMatrix(w=bad, eigenvalues=np.linalg.eigvalsh(bad))
    asym = np.array([[0.5, 0.5], [0.4, 0.6]])
    with pytest.raises(ValueError):
        MixingMatrix(w=asym, eigenvalues=np.linalg.eigvalsh(asym))
    neg = np.array([[1.2, -0.2], [-0.2, 1.2]])
    with pytest.raises(ValueError):
        MixingMatrix(w=neg, eigenvalues=np.linalg.eigvalsh(neg))


# ---------------------------------------------------------------------------
# Spectral statistics.
# ---------------------------------------------------------------------------

def test_line_spectrum_closed_form():
    mix = metropolis_weights(build_topology("line", 10))
    eigs = np.sort(np.linalg.eigvalsh(np.eye(10) - mix.w))
    assert_allclose(eigs, line_eigs(10), atol=1e-12)
    stats = spectral_stats(mix)
    assert abs(stats.lambda_max - 1.3007) < 5e-5
    assert abs(stats.lambda_min_nz - 0.0326) < 5e-5


def test_cycle_spectrum_closed_form():
    mix = metropolis_weights(build_topology("cycle", 10))
    eigs = np.sort(np.linalg.eigvalsh(np.eye(10) - mix.w))
    assert_allclose(eigs, cycle_eigs(10), atol=1e-12)
    stats = spectral_stats(mix)
    assert abs(stats.lambda_max - 4.0 / 3.0) < 1e-12
    assert abs(stats.lambda_min_nz - 0.1273) < 5e-5


def test_complete_spectrum_exact():
    stats = spectral_stats(metropolis_weights(build_topology("complete", 10)))
    assert abs(stats.lambda_max - 1.0) < 1e-12
    assert abs(stats.lambda_min_nz - 1.0) < 1e-12


def test_root_squares_back():
    for kind in ("line", "cycle", "complete"):
        mix = metropolis_weights(build_topology(kind, 10))
        stats = spectral_stats(mix)
        target = np.eye(10) - mix.w
        err = np.linalg.norm(stats.root @ stats.root - target)
        assert err / np.linalg.norm(target) < 1e-10
        assert np.allclose(stats.root, stats.root.T, atol=1e-14)


def test_spectral_stats_rejects_single_node():
    with pytest.raises(ValueError):
        spectral_stats(metropolis_weights(build_topology("complete", 1)))


def test_laplacian_matches_definition():
    g = build_topology("random", 8, tau=0.5, seed=2)
    lap = laplacian(g)
    assert_array_equal(lap, np.diag(g.degrees.astype(float)) - g.adjacency())
    assert_allclose(lap @ np.ones(8), np.zeros(8), atol=1e-12)


# ---------------------------------------------------------------------------
# Serialization.
# ---------------------------------------------------------------------------

def test_topology_doc_round_trip():
    g = build_topology("random", 9, tau=0.6, seed=11)
    mix = metropolis_weights(g)
    doc = json.loads(json.dumps(topology_to_doc(g, mix)))
    assert set(doc) == {"n", "edges", "weights"}
    g2, mix2 = topology_from_doc(doc)
    assert g2.edges == g.edges
    assert_array_equal(mix2.w, mix.w)


def test_topology_doc_shape_mismatch():
    g = build_topology("line", 4)
    doc = topology_to_doc(g, metropolis_weights(g))
    doc["weights"] = doc["weights"][:3]
    with pytest.raises(ValueError):
        topology_from_doc(doc)
