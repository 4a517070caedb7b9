import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lvr.data import Dataset
from lvr.graph import build_graph, build_knn, dump_graph, edge_deltas, edge_neighborhoods, prune_by_radius


def brute_knn(points, k):
    """All-pairs oracle: sort every other node by (distance, index)."""
    edges = []
    for i, p in enumerate(points):
        cand = sorted((sum((a - b) ** 2 for a, b in zip(p, q)), j) for j, q in enumerate(points) if j != i)
        edges += [(i, j) for _, j in cand[:k]]
    return edges


def test_collinear_example():
    edges, _ = build_knn(np.array([[0.0], [1.0], [3.0]]), 1)
    assert {tuple(e) for e in edges} == {(0, 1), (1, 0), (2, 1)}


def test_complete_graph_when_k_is_t_minus_one(rng):
    x = rng.normal(size=(7, 2))
    edges, _ = build_knn(x, 6)
    assert {tuple(e) for e in edges} == {(i, j) for i in range(7) for j in range(7) if i != j}


def test_duplicates_are_mutual_nearest_neighbors(rng):
    x = rng.normal(size=(6, 3))
    x = np.vstack([x, x])
    edges, d = build_knn(x, 1)
    for (i, j), dist in zip(edges, d):
        assert j == (i + 6) % 12 and dist == 0.0


def test_k_out_of_range():
    x = np.zeros((5, 2))
    for k in (0, 5, 9):
        with pytest.raises(ValueError):
            build_knn(x, k)


def test_knn_matches_brute_force_on_200_datasets():
    r = np.random.default_rng(2024)
    for trial in range(200):
        t = int(r.integers(2, 101))
        k = int(r.integers(1, min(8, t - 1) + 1))
        dim = int(r.integers(1, 5))
        x = r.normal(size=(t, dim))
        if trial % 4 == 0:
            x = r.integers(-3, 4, size=(t, dim)).astype(float)   # exact ties
        edges, d = build_knn(x, k)
        assert [tuple(e) for e in edges.tolist()] == brute_knn(x.tolist(), k)
        assert np.allclose(d, [math.dist(x[i], x[j]) for i, j in edges], atol=1e-12)


def test_quantile_hand_example():
    edges = np.array([[0, 1], [0, 2], [0, 3], [0, 4]])
    dists = np.array([1.0, 2.0, 3.0, 4.0])
    kept, kd, radius = prune_by_radius(edges, dists, 5, 0.5)
    assert radius[0] == 2.5
    assert kept.tolist() == [[0, 1], [0, 2]]
    assert kd.tolist() == [1.0, 2.0]


def test_quantile_fixtures():
    # linear-interpolation quantile radii computed by hand
    edges = np.array([[0, 1], [0, 2], [0, 3], [1, 0], [1, 2], [1, 3], [2, 0], [2, 1], [2, 3]])
    dists = np.array([1.0, 3.0, 7.0, 1.0, 2.0, 2.0, 3.0, 2.0, 5.0])
    _, _, radius = prune_by_radius(edges, dists, 4, 0.8)
    # node 0: sorted (1, 3, 7), position 0.8 * 2 = 1.6 -> 3 + 0.6 * 4 = 5.4
    # node 1: (1, 2, 2) -> 2.0 ; node 2: (2, 3, 5) -> 3 + 0.6 * 2 = 4.2
    assert radius[0] == pytest.approx(5.4, abs=1e-12)
    assert radius[1] == pytest.approx(2.0, abs=1e-12)
    assert radius[2] == pytest.approx(4.2, abs=1e-12)
    assert np.isnan(radius[3])


def test_q_one_drops_at_most_the_farthest_edge(rng):
    x = rng.normal(size=(30, 2))
    edges, d = build_knn(x, 5)
    kept, _, _ = prune_by_radius(edges, d, 30, 1.0)
    for i in range(30):
        n_kept = np.sum(kept[:, 0] == i)
        assert n_kept in (4, 5) or n_kept >= 1


def test_all_tied_keeps_nearest_edge():
    edges = np.array([[0, 1], [0, 2], [0, 3]])
    kept, _, _ = prune_by_radius(edges, np.ones(3), 4, 0.5)
    assert kept.tolist() == [[0, 1]]


def test_q_out_of_range():
    for q in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            prune_by_radius(np.array([[0, 1]]), np.ones(1), 2, q)


@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_pruned_graph_invariants(seed, q):
    r = np.random.default_rng(seed)
    t = int(r.integers(3, 40))
    x = r.normal(size=(t, 2))
    edges, d = build_knn(x, min(5, t - 1))
    kept, kd, radius = prune_by_radius(edges, d, t, q)
    for i in range(t):
        assert np.sum(kept[:, 0] == i) >= 1
    for (i, j), dist in zip(kept, kd):
        assert i != j
        n_out = np.sum(kept[:, 0] == i)
        assert dist < radius[i] or n_out == 1


def test_neighborhood_chain():
    x = np.array([[0.0], [1.0], [2.0]])
    nbrs, sizes = edge_neighborhoods(np.array([[0, 1], [1, 2]]), x, 8)
    assert set(nbrs[0, : sizes[0]]) >= {0, 1}
    assert nbrs[0, 0] == 0 and nbrs[1, 0] == 1


def test_neighborhood_isolated_pair():
    x = np.array([[0.0], [1.0], [10.0], [11.0]])
    nbrs, sizes = edge_neighborhoods(np.array([[0, 1], [1, 0], [2, 3], [3, 2]]), x, 8)
    assert nbrs[0, : sizes[0]].tolist() == [0, 1]
    assert nbrs[2, : sizes[2]].tolist() == [2, 3]


def test_neighborhood_cap_one(rng):
    x = rng.normal(size=(20, 2))
    edges, _ = build_knn(x, 3)
    nbrs, sizes = edge_neighborhoods(edges, x, 1)
    assert np.all(sizes == 1) and np.array_equal(nbrs[:, 0], np.arange(len(edges)))


def test_neighborhood_definition_matches_oracle(rng):
    x = rng.normal(size=(25, 2))
    edges, _ = build_knn(x, 4)
    nbrs, sizes = edge_neighborhoods(edges, x, 6)
    mid = 0.5 * (x[edges[:, 0]] + x[edges[:, 1]])
    for e, (i, j) in enumerate(edges):
        cand = [f for f, (a, b) in enumerate(edges) if f != e and {a, b} & {i, j}]
        cand.sort(key=lambda f: (np.linalg.norm(mid[f] - mid[e]), f))
        assert nbrs[e, : sizes[e]].tolist() == [e] + cand[:5]


def test_edge_deltas_examples():
    states = np.array([[0.0, 0.0], [1.0, 2.0], [1.0, 2.0]])
    actions = np.array([[0.5], [1.5], [1.5]])
    dx, du, deg = edge_deltas(states, actions, np.array([[0, 1], [1, 0], [1, 2]]))
    assert dx[0].tolist() == [1.0, 2.0]
    assert np.array_equal(dx[1], -dx[0]) and np.array_equal(du[1], -du[0])
    assert np.all(dx[2] == 0) and deg[2] and not deg[0]


def test_build_graph_defaults_and_determinism(rng, tmp_path):
    data = Dataset(rng.normal(size=(60, 3)), rng.normal(size=(60, 1)), 0.02)
    g1 = build_graph(data)
    g2 = build_graph(data)
    assert np.array_equal(g1.edges, g2.edges) and np.array_equal(g1.neighborhoods, g2.neighborhoods)
    assert np.all(g1.sizes >= 1) and np.all(g1.sizes <= 32)
    small = Dataset(rng.normal(size=(5, 2)), rng.normal(size=5), 0.02)
    assert build_graph(small, k=32).n_edges >= 5   # k clamped to T - 1
    dump_graph(tmp_path / "g.json", g1)
    d = json.loads((tmp_path / "g.json").read_text())
    assert d["n_edges"] == g1.n_edges and len(d["node_radius"]) == 60
