"""Pruned kNN graph over demonstration states and per-edge neighborhoods."""

import json
from dataclasses import dataclass

import numpy as np

from .policy import standardization

DEGENERATE_EPS = 1e-10


@dataclass
class KnnGraph:
    edges: np.ndarray          # (E, 2) directed pairs (i, j)
    dists: np.ndarray          # (E,) edge lengths in standardized state space
    node_radius: np.ndarray    # (T,) pruning radius eps_i per node
    neighborhoods: np.ndarray  # (E, cap) edge indices, -1 padded; column 0 is the edge itself
    sizes: np.ndarray          # (E,) number of valid entries per row

    @property
    def n_edges(self):
        return len(self.edges)

    def neighborhood(self, e):
        return self.neighborhoods[e, : self.sizes[e]]


def pairwise_distances(points):
    x = np.asarray(points, dtype=float)
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def build_knn(points, k):
    """Exactly ``k`` outgoing edges per node to its nearest other nodes.

    Exhaustive search; ties go to the lower index. Returns ``(edges, dists)``
    with each node's edges listed nearest first.
    """
    x = np.asarray(points, dtype=float)
    t = len(x)
    if not 1 <= k < t:
        raise ValueError(f"k must satisfy 1 <= k < {t}, got {k}")
    d = pairwise_distances(x)
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    src = np.repeat(np.arange(t), k)
    dst = order.ravel()
    return np.stack([src, dst], axis=1), d[src, dst]


def prune_by_radius(edges, dists, n_nodes, q):
    """Keep edges with ``d(i, j) < eps_i``, ``eps_i`` the q-quantile of node i's edge lengths.

    A node that would lose every edge keeps its nearest one. Returns
    ``(kept_edges, kept_dists, radius)``.
    """
    if not 0 < q <= 1:
        raise ValueError(f"q must be in (0, 1], got {q}")
    edges = np.asarray(edges)
    dists = np.asarray(dists, dtype=float)
    radius = np.full(n_nodes, np.nan)
    keep = np.zeros(len(edges), dtype=bool)
    for i in range(n_nodes):
        idx = np.flatnonzero(edges[:, 0] == i)
        if idx.size == 0:
            continue
        di = dists[idx]
        radius[i] = np.quantile(di, q, method="linear")
        k_i = di < radius[i]
        if not k_i.any():
            k_i[np.lexsort((edges[idx, 1], di))[0]] = True
        keep[idx] = k_i
    return edges[keep], dists[keep], radius


def edge_neighborhoods(edges, points, cap):
    """Neighborhood N(e) for each edge.

    Candidates are all edges sharing an endpoint with ``e``, ranked by the
    distance between edge midpoints (ties by edge index) and truncated to
    ``cap``. ``e`` itself always comes first.
    """
    edges = np.asarray(edges)
    x = np.asarray(points, dtype=float)
    n_e = len(edges)
    if n_e == 0:
        raise ValueError("no edges to build neighborhoods from")
    cap = int(cap)
    if cap < 1:
        raise ValueError("cap must be >= 1")
    mid = 0.5 * (x[edges[:, 0]] + x[edges[:, 1]])
    incident = [[] for _ in range(len(x))]
    for e, (i, j) in enumerate(edges):
        incident[i].append(e)
        if j != i:
            incident[j].append(e)
    incident = [np.array(v, dtype=int) for v in incident]
    out = np.full((n_e, cap), -1, dtype=int)
    sizes = np.zeros(n_e, dtype=int)
    for e, (i, j) in enumerate(edges):
        cand = np.union1d(incident[i], incident[j])
        cand = cand[cand != e]
        dm = np.linalg.norm(mid[cand] - mid[e], axis=1)
        ranked = cand[np.lexsort((cand, dm))][: cap - 1]
        row = np.concatenate([[e], ranked])
        out[e, : len(row)] = row
        sizes[e] = len(row)
    return out, sizes


def edge_deltas(states, actions, edges):
    """Per-edge ``dx = x_j - x_i``, ``du = u_j - u_i`` and a degeneracy flag on ``du``."""
    edges = np.asarray(edges)
    s = np.asarray(states, dtype=float)
    a = np.asarray(actions, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    dx = s[edges[:, 1]] - s[edges[:, 0]]
    du = a[edges[:, 1]] - a[edges[:, 0]]
    degenerate = np.linalg.norm(du, axis=1) < DEGENERATE_EPS
    return dx, du, degenerate


def build_graph(data, k=32, q=0.8, cap=32, stats=None):
    """kNN graph on standardized states of ``data``; k is clamped to T-1."""
    mean, std = stats if stats is not None else standardization(data.states)
    z = (data.states - mean) / std
    t = len(z)
    if t < 2:
        raise ValueError("need at least 2 samples to build a graph")
    k_eff = min(int(k), t - 1)
    edges, dists = build_knn(z, k_eff)
    edges, dists, radius = prune_by_radius(edges, dists, t, q)
    nbrs, sizes = edge_neighborhoods(edges, z, cap)
    return KnnGraph(edges=edges, dists=dists, node_radius=radius, neighborhoods=nbrs, sizes=sizes)


def graph_summary(graph, config=None):
    """Diagnostic JSON-ready dict: edges, radii, neighborhood sizes."""
    return {
        "config": config or {},
        "n_edges": int(graph.n_edges),
        "edges": graph.edges.tolist(),
        "node_radius": [None if np.isnan(r) else float(r) for r in graph.node_radius],
        "neighborhood_sizes": graph.sizes.tolist(),
    }


def dump_graph(path, graph, config=None):
    with open(path, "w") as fh:
        json.dump(graph_summary(graph, config), fh, sort_keys=True)
