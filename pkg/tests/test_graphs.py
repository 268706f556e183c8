"""Graph container, normalizations, spectral norm, structural distance,
and edge perturbation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advdiff.errors import AlignmentError
from advdiff.graphs import (
    Graph,
    NormMode,
    adjacency_gap,
    normalized_adjacency,
    normalized_coo,
    perturb_edges,
    power_iteration,
    spectral_norm,
)


def path3():
    # 0-1-2 path
    return Graph(3, [(0, 1, 1.0), (1, 2, 1.0)])


def test_edges_are_canonicalized():
    g = Graph(4, [(2, 1, 1.0), (0, 3, 2.0)])
    assert list(g.edges()) == [(0, 3, 2.0), (1, 2, 1.0)]
    g2 = Graph(4, [(1, 2, 1.0), (3, 0, 2.0)])
    assert g == g2


def test_graph_validation():
    with pytest.raises(ValueError):
        Graph(2, [(0, 2, 1.0)])  # endpoint out of range
    with pytest.raises(ValueError):
        Graph(2, [(0, 0, 1.0)])  # self-loop
    with pytest.raises(ValueError):
        Graph(3, [(0, 1, 1.0), (1, 0, 1.0)])  # same pair twice
    with pytest.raises(ValueError):
        Graph(-1, [])


def test_degrees_and_adjacency():
    g = path3()
    assert np.array_equal(g.degrees(), [1.0, 2.0, 1.0])
    expected = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
    assert np.array_equal(g.adjacency(), expected)


def test_symmetric_normalization_path3():
    # D^{-1/2} A D^{-1/2} on the path: corner entries 1/sqrt(2)
    a = normalized_adjacency(path3(), NormMode.SYMMETRIC)
    s = 1.0 / np.sqrt(2.0)
    expected = np.array([[0, s, 0], [s, 0, s], [0, s, 0]])
    assert np.allclose(a, expected, atol=1e-15)


def test_row_normalization_path3():
    a = normalized_adjacency(path3(), NormMode.ROW)
    expected = np.array([[0, 1, 0], [0.5, 0, 0.5], [0, 1, 0]])
    assert np.allclose(a, expected, atol=1e-15)
    assert np.allclose(a.sum(axis=1), 1.0)


def test_isolated_node_rows_are_zero():
    g = Graph(3, [(0, 1, 1.0)])
    for mode in NormMode:
        a = normalized_adjacency(g, mode)
        assert np.array_equal(a[2], np.zeros(3))
        assert np.array_equal(a[:, 2], np.zeros(3))


def test_normalized_coo_matches_dense():
    rng = np.random.default_rng(0)
    n = 12
    pairs = {(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3}
    g = Graph(n, [(u, v, 1.0) for u, v in pairs])
    for mode in NormMode:
        rows, cols, vals = normalized_coo(g, mode)
        dense = np.zeros((n, n))
        np.add.at(dense, (rows, cols), vals)
        assert np.allclose(dense, normalized_adjacency(g, mode), atol=1e-14)


def test_spectral_norm_against_svd_oracle():
    assert spectral_norm(np.array([[3.0, 0.0], [0.0, 4.0]])) == pytest.approx(4.0, abs=1e-9)
    rng = np.random.default_rng(1)
    for _ in range(6):
        m = rng.standard_normal((7, 7))
        ref = np.linalg.svd(m, compute_uv=False)[0]
        assert spectral_norm(m) == pytest.approx(ref, rel=1e-7)


def test_spectral_norm_scaling_property():
    rng = np.random.default_rng(2)
    m = rng.standard_normal((5, 5))
    assert spectral_norm(3.0 * m) == pytest.approx(3.0 * spectral_norm(m), rel=1e-7)


def test_power_iteration_handles_orthogonal_start():
    # ones vector is in the null direction of M^T M for this matrix;
    # the seeded restart must recover the true norm
    m = np.array([[1.0, -1.0], [1.0, -1.0]])
    ref = np.linalg.svd(m, compute_uv=False)[0]
    est, converged, _ = power_iteration(m, seed=0)
    assert converged
    assert est == pytest.approx(ref, rel=1e-7)


def test_spectral_norm_zero_matrix():
    assert spectral_norm(np.zeros((4, 4))) == 0.0


def test_adjacency_gap_zero_iff_equal():
    g = path3()
    assert adjacency_gap(g, g) == 0.0
    h = Graph(3, [(0, 1, 1.0), (0, 2, 1.0)])
    assert adjacency_gap(g, h) > 0.0


def test_adjacency_gap_matches_direct_norm():
    g = path3()
    h = Graph(3, [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 1.0)])
    diff = normalized_adjacency(h, NormMode.SYMMETRIC) - normalized_adjacency(
        g, NormMode.SYMMETRIC
    )
    ref = np.linalg.svd(diff, compute_uv=False)[0]
    assert adjacency_gap(g, h) == pytest.approx(ref, rel=1e-7)


def test_adjacency_gap_size_mismatch():
    with pytest.raises(AlignmentError):
        adjacency_gap(path3(), Graph(4, [(0, 1, 1.0)]))


def test_perturb_edges_flip_count_and_determinism():
    rng = np.random.default_rng(9)
    n = 20
    pairs = {(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.2}
    g = Graph(n, [(u, v, 1.0) for u, v in pairs])
    ga = perturb_edges(g, 7, rng_seed=123)
    gb = perturb_edges(g, 7, rng_seed=123)
    assert ga == gb
    # exactly 7 pair slots toggled
    before = {(u, v) for u, v, _ in g.edges()}
    after = {(u, v) for u, v, _ in ga.edges()}
    assert len(before ^ after) == 7


def test_perturb_edges_is_involution_under_same_seed():
    g = path3()
    flipped = perturb_edges(g, 2, rng_seed=77)
    back = perturb_edges(flipped, 2, rng_seed=77)
    assert back == g


def test_perturb_edges_zero_is_identity():
    g = path3()
    assert perturb_edges(g, 0, rng_seed=5) == g


def test_perturb_edges_rejects_overlarge_count():
    with pytest.raises(ValueError):
        perturb_edges(path3(), 4, rng_seed=0)  # only 3 pairs exist on 3 nodes


def test_perturb_edges_different_seeds_differ():
    rng = np.random.default_rng(10)
    n = 15
    pairs = {(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3}
    g = Graph(n, [(u, v, 1.0) for u, v in pairs])
    outcomes = {tuple(perturb_edges(g, 5, rng_seed=s).edges()) for s in range(6)}
    assert len(outcomes) > 1


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**31 - 1))
def test_property_row_normalized_rows_stochastic_or_zero(n, seed):
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.4]
    g = Graph(n, [(u, v, 1.0) for u, v in pairs])
    a = normalized_adjacency(g, NormMode.ROW)
    sums = a.sum(axis=1)
    deg = g.degrees()
    assert np.allclose(sums[deg > 0], 1.0, atol=1e-12)
    assert np.array_equal(sums[deg == 0], np.zeros((deg == 0).sum()))


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 12), st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_property_perturb_preserves_node_count_and_features(n, seed, flips):
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
    feats = rng.standard_normal((n, 3))
    g = Graph(n, [(u, v, 1.0) for u, v in pairs], node_features=feats)
    total_pairs = n * (n - 1) // 2
    if flips > total_pairs:
        flips = total_pairs
    h = perturb_edges(g, flips, rng_seed=seed)
    assert h.n == n
    assert np.array_equal(h.node_features, feats)
