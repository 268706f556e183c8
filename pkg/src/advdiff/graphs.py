"""Undirected weighted graphs and the spectral tools used everywhere else.

A `Graph` is a node count plus a canonical edge list (u < v, no
self-loops, no duplicates, positive weights) and optional node features.
Normalized adjacencies, coordinate forms, and masks are computed lazily
and cached per instance; graphs are treated as immutable after
construction.
"""

from __future__ import annotations

import logging
from enum import Enum

import numpy as np

from .errors import AlignmentError, DimensionError
from .rng import rng_for

log = logging.getLogger(__name__)

__all__ = [
    "NormMode",
    "Graph",
    "normalized_adjacency",
    "normalized_coo",
    "power_iteration",
    "spectral_norm",
    "adjacency_gap",
    "perturb_edges",
]


class NormMode(str, Enum):
    """Adjacency normalization: D^-1/2 A D^-1/2 or D^-1 A."""

    SYMMETRIC = "symmetric"
    ROW = "row"


class Graph:
    """Immutable undirected weighted graph.

    Edges are canonicalized to u < v and sorted lexicographically, so two
    graphs with the same edge set compare and serialize identically.
    """

    __slots__ = ("n", "edge_u", "edge_v", "edge_w", "node_features", "_cache")

    def __init__(self, n: int, edges, node_features=None):
        n = int(n)
        if n < 0:
            raise ValueError(f"Graph: negative node count {n}")
        self.n = n
        eu, ev, ew = _canonical_edges(n, edges)
        self.edge_u = eu
        self.edge_v = ev
        self.edge_w = ew
        if node_features is not None:
            node_features = np.ascontiguousarray(node_features, dtype=np.float64)
            if node_features.ndim != 2 or node_features.shape[0] != n:
                raise DimensionError("Graph(node_features)", node_features.shape, (n, -1))
        self.node_features = node_features
        self._cache: dict = {}

    @property
    def edge_count(self) -> int:
        return int(self.edge_u.size)

    def edges(self):
        """Iterate (u, v, w) triples in canonical order."""
        for u, v, w in zip(self.edge_u, self.edge_v, self.edge_w):
            yield int(u), int(v), float(w)

    def degrees(self) -> np.ndarray:
        """Weighted degree vector d_u = sum of incident edge weights."""
        d = self._cache.get("degrees")
        if d is None:
            d = np.zeros(self.n)
            np.add.at(d, self.edge_u, self.edge_w)
            np.add.at(d, self.edge_v, self.edge_w)
            self._cache["degrees"] = d
        return d

    def adjacency(self) -> np.ndarray:
        """Dense weighted adjacency matrix (symmetric, zero diagonal)."""
        a = self._cache.get("adjacency")
        if a is None:
            a = np.zeros((self.n, self.n))
            a[self.edge_u, self.edge_v] = self.edge_w
            a[self.edge_v, self.edge_u] = self.edge_w
            self._cache["adjacency"] = a
        return a

    def adjacency_mask(self) -> np.ndarray:
        """Dense 0/1 edge-existence mask (symmetric, zero diagonal)."""
        m = self._cache.get("mask")
        if m is None:
            m = np.zeros((self.n, self.n))
            m[self.edge_u, self.edge_v] = 1.0
            m[self.edge_v, self.edge_u] = 1.0
            self._cache["mask"] = m
        return m

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.edge_u, other.edge_u)
            and np.array_equal(self.edge_v, other.edge_v)
            and np.array_equal(self.edge_w, other.edge_w)
        )

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, edges={self.edge_count})"


def _canonical_edges(n: int, edges):
    """Validate and canonicalize an edge collection to sorted u < v arrays."""
    if edges is None:
        rows = np.zeros(0, dtype=np.int64)
        return rows, rows.copy(), np.zeros(0)
    arr = list(edges)
    if not arr:
        rows = np.zeros(0, dtype=np.int64)
        return rows, rows.copy(), np.zeros(0)
    eu = np.asarray([e[0] for e in arr], dtype=np.int64)
    ev = np.asarray([e[1] for e in arr], dtype=np.int64)
    ew = np.asarray([e[2] if len(e) > 2 else 1.0 for e in arr], dtype=np.float64)
    if eu.min(initial=0) < 0 or ev.min(initial=0) < 0 or max(eu.max(initial=-1), ev.max(initial=-1)) >= n:
        raise ValueError(f"Graph: edge endpoint out of range for n={n}")
    if (eu == ev).any():
        raise ValueError("Graph: self-loops are not allowed")
    if not np.isfinite(ew).all() or (ew <= 0).any():
        raise ValueError("Graph: edge weights must be finite and positive")
    lo = np.minimum(eu, ev)
    hi = np.maximum(eu, ev)
    order = np.lexsort((hi, lo))
    lo, hi, ew = lo[order], hi[order], ew[order]
    key = lo * np.int64(n) + hi
    if np.unique(key).size != key.size:
        raise ValueError("Graph: duplicate edges are not allowed")
    return lo, hi, np.ascontiguousarray(ew)


def normalized_adjacency(g: Graph, mode: NormMode = NormMode.SYMMETRIC) -> np.ndarray:
    """Dense normalized adjacency; rows/columns of isolated nodes are zero."""
    mode = NormMode(mode)
    key = ("norm", mode)
    out = g._cache.get(key)
    if out is not None:
        return out
    a = g.adjacency()
    d = g.degrees()
    with np.errstate(divide="ignore"):
        if mode is NormMode.SYMMETRIC:
            inv_sqrt = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)
            out = inv_sqrt[:, None] * a * inv_sqrt[None, :]
        else:
            inv = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)
            out = inv[:, None] * a
    g._cache[key] = out
    return out


def normalized_coo(g: Graph, mode: NormMode = NormMode.SYMMETRIC):
    """Normalized adjacency in coordinate form: (rows, cols, vals).

    Both orientations of every undirected edge appear, so the triple
    represents the full (generally asymmetric under row normalization)
    matrix and feeds the sparse scatter kernel directly.
    """
    mode = NormMode(mode)
    key = ("coo", mode)
    out = g._cache.get(key)
    if out is not None:
        return out
    d = g.degrees()
    u, v, w = g.edge_u, g.edge_v, g.edge_w
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    if mode is NormMode.SYMMETRIC:
        c = w / np.sqrt(d[u] * d[v])
        vals = np.concatenate([c, c])
    else:
        vals = np.concatenate([w / d[u], w / d[v]])
    out = (
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(cols, dtype=np.int64),
        np.ascontiguousarray(vals, dtype=np.float64),
    )
    g._cache[key] = out
    return out


def power_iteration(m: np.ndarray, tol: float = 1e-9, max_iter: int = 10000, seed: int = 0):
    """Largest singular value of m by power iteration on m^T m.

    Starts from a deterministic vector; if the iterate collapses to zero
    while m is nonzero (start vector orthogonal to the top subspace or in
    the null space), it restarts from seeded noise. Returns
    (estimate, converged, iterations).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError("power_iteration", m.shape)
    if m.size == 0 or not m.any():
        return 0.0, True, 0
    q = m.shape[1]
    v = np.full(q, 1.0 / np.sqrt(q))
    sigma_prev = np.inf
    restarts = 0
    for it in range(1, max_iter + 1):
        w = m @ v
        vv = m.T @ w
        nrm = np.linalg.norm(vv)
        if nrm < 1e-300:
            if restarts >= 3:
                return 0.0, False, it
            v = rng_for(seed, "power-restart", restarts).standard_normal(q)
            v /= np.linalg.norm(v)
            restarts += 1
            sigma_prev = np.inf
            continue
        v = vv / nrm
        sigma = float(np.linalg.norm(m @ v))
        if abs(sigma - sigma_prev) <= tol * max(1.0, sigma):
            return sigma, True, it
        sigma_prev = sigma
    return sigma_prev if np.isfinite(sigma_prev) else 0.0, False, max_iter


def spectral_norm(m: np.ndarray, tol: float = 1e-9, max_iter: int = 10000) -> float:
    """Largest singular value; warns (and returns the best estimate) on
    non-convergence."""
    sigma, converged, iters = power_iteration(m, tol=tol, max_iter=max_iter)
    if not converged:
        log.warning("spectral_norm: no convergence after %d iterations", iters)
    return sigma


def adjacency_gap(g: Graph, g2: Graph, mode: NormMode = NormMode.SYMMETRIC) -> float:
    """Spectral norm of the difference of normalized adjacencies.

    Nodes are aligned by index, which is meaningful for graphs generated
    over a shared node set (as in the synthetic suites).
    """
    if g.n != g2.n:
        raise AlignmentError(f"adjacency_gap: node counts differ ({g.n} vs {g2.n})")
    diff = normalized_adjacency(g2, mode) - normalized_adjacency(g, mode)
    return spectral_norm(diff)


def _pair_offsets(n: int, u: np.ndarray) -> np.ndarray:
    # Linear index of pair (u, u+1) in the lexicographic enumeration of u < v.
    return u * np.int64(n) - (u * (u + 1)) // 2


def perturb_edges(g: Graph, flip_count: int, rng_seed: int) -> Graph:
    """Toggle `flip_count` distinct node pairs chosen uniformly at random.

    Existing edges among the sampled pairs are removed; missing ones are
    created with weight 1. Node features carry over. Applying the same
    seed twice returns a graph equal to the original.
    """
    n = g.n
    total = (n * (n - 1)) // 2
    flip_count = int(flip_count)
    if flip_count < 0 or flip_count > total:
        raise ValueError(f"perturb_edges: flip_count {flip_count} not in [0, {total}]")
    if flip_count == 0:
        return Graph(n, list(g.edges()), node_features=g.node_features)
    rng = rng_for(rng_seed, "edge-flips")
    picks = np.sort(rng.choice(total, size=flip_count, replace=False).astype(np.int64))
    # Invert the pair index: largest u with offset(u) <= t, then v.
    t = picks.astype(np.float64)
    b = 2 * n - 1
    u = np.floor((b - np.sqrt(b * b - 8.0 * t)) / 2.0).astype(np.int64)
    u = np.clip(u, 0, n - 2)
    # Guard against float rounding at block boundaries.
    off = _pair_offsets(n, u)
    too_high = off > picks
    u[too_high] -= 1
    off = _pair_offsets(n, u)
    spill = picks - off >= (n - 1 - u)
    u[spill] += 1
    off = _pair_offsets(n, u)
    v = u + 1 + (picks - off)
    existing = {(int(a), int(b2)): float(w) for a, b2, w in zip(g.edge_u, g.edge_v, g.edge_w)}
    for a, b2 in zip(u, v):
        pair = (int(a), int(b2))
        if pair in existing:
            del existing[pair]
        else:
            existing[pair] = 1.0
    edges = [(a, b2, w) for (a, b2), w in existing.items()]
    return Graph(n, edges, node_features=g.node_features)
