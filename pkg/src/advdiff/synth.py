"""Synthetic block-model suites with controlled topological shift.

A suite is 12 graphs over one shared set of latent node positions
u ~ U[0,1]. Node features are a fixed random MLP of u (shared across the
suite), and labels combine a graph-dependent part (a random two-layer
graph convolution of u over each graph's normalized adjacency) with a
graph-independent part (one global-attention step over u). Graph #1
trains, #2 validates, #3..#12 test under a schedule that moves one
generation knob further from the training distribution per index.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError
from .graphs import Graph, NormMode, adjacency_gap, normalized_adjacency
from .rng import rng_for

__all__ = [
    "SbmParams",
    "ShiftKind",
    "ShiftSuite",
    "LABEL_GENERATOR",
    "SUITE_SIZE",
    "sample_latents",
    "gen_features",
    "gen_sbm",
    "gen_labels",
    "schedule",
    "make_suite",
]

SUITE_SIZE = 12
ROLES = ("train", "valid") + ("test",) * (SUITE_SIZE - 2)

# Version tag for the label-generating function; recorded in manifests so
# result files are comparable only within the same label semantics.
LABEL_GENERATOR = "gcn2+global-attn-v1"

FEATURE_DIM = 4
HIDDEN = 8


@dataclass(frozen=True)
class SbmParams:
    """Stochastic block model: b equal blocks over shared latents."""

    n: int = 1000
    b: int = 5
    p1: float = 0.1
    p2: float = 0.01

    def __post_init__(self):
        if self.n < 1 or self.b < 1:
            raise ConfigError(f"SbmParams: n and b must be positive ({self})")
        if not (0.0 <= self.p2 <= self.p1 <= 1.0):
            raise ConfigError(f"SbmParams: need 0 <= p2 <= p1 <= 1 ({self})")


class ShiftKind(str, Enum):
    HOMOPHILY = "homophily"
    DENSITY = "density"
    BLOCK = "block"


@dataclass
class ShiftSuite:
    kind: ShiftKind
    seed: int
    n: int
    latents: np.ndarray  # (n, 1)
    features: np.ndarray  # (n, FEATURE_DIM)
    graphs: list[Graph]  # SUITE_SIZE graphs
    labels: list[np.ndarray]  # (n, 1) per graph
    schedule: list[SbmParams]
    roles: tuple[str, ...] = ROLES
    label_generator: str = LABEL_GENERATOR

    @property
    def train_graph(self) -> Graph:
        return self.graphs[0]

    @property
    def valid_graph(self) -> Graph:
        return self.graphs[1]

    def test_indices(self) -> list[int]:
        """Zero-based indices of the test graphs."""
        return [i for i, r in enumerate(self.roles) if r == "test"]

    def gaps_to_train(self, mode: NormMode = NormMode.SYMMETRIC) -> list[float]:
        """Adjacency gap of every graph to graph #1 (train gap is 0)."""
        key = ("gaps", NormMode(mode))
        cached = self.graphs[0]._cache.get(key)
        if cached is None:
            cached = [adjacency_gap(self.graphs[0], g, mode) for g in self.graphs]
            self.graphs[0]._cache[key] = cached
        return cached


def sample_latents(n: int, seed: int) -> np.ndarray:
    """Latent positions u ~ U[0,1], one per node, as an (n, 1) matrix."""
    return rng_for(seed, "latents").random((n, 1))


def gen_features(latents: np.ndarray, seed: int) -> np.ndarray:
    """Node features: a fixed random two-layer MLP of the latent."""
    rng = rng_for(seed, "features")
    w1 = rng.standard_normal((1, HIDDEN))
    b1 = rng.standard_normal((1, HIDDEN))
    w2 = rng.standard_normal((HIDDEN, FEATURE_DIM))
    b2 = rng.standard_normal((1, FEATURE_DIM))
    h = np.maximum(latents @ w1 + b1, 0.0)
    return h @ w2 + b2


def block_of(latents: np.ndarray, b: int) -> np.ndarray:
    """Block index floor(u * b), clamped to b - 1."""
    return np.minimum((latents.ravel() * b).astype(np.int64), b - 1)


def gen_sbm(latents: np.ndarray, params: SbmParams, seed: int) -> Graph:
    """Sample one block-model graph over the given latents.

    Every unordered pair draws an independent Bernoulli with probability
    p1 inside a block and p2 across blocks; edges get weight 1.
    """
    n = latents.shape[0]
    if n != params.n:
        raise ConfigError(f"gen_sbm: latents ({n}) disagree with params.n ({params.n})")
    rng = rng_for(seed, "sbm-edges")
    blocks = block_of(latents, params.b)
    iu, iv = np.triu_indices(n, k=1)
    prob = np.where(blocks[iu] == blocks[iv], params.p1, params.p2)
    keep = rng.random(iu.size) < prob
    edges = [(int(a), int(c), 1.0) for a, c in zip(iu[keep], iv[keep])]
    return Graph(n, edges)


def gen_labels(latents: np.ndarray, g: Graph, label_seed: int) -> np.ndarray:
    """Targets combining graph-dependent and graph-independent signal.

    The graph part is a random two-layer graph convolution of u over the
    symmetric normalized adjacency (widths 1 -> HIDDEN -> 1, ReLU between,
    biases included; on an empty graph only the bias pathway survives).
    The global part embeds u, applies one unmasked cosine-attention
    mixing step, and reads out linearly. Weights depend only on
    `label_seed`, so repeated calls share them bit for bit.
    """
    rng = rng_for(label_seed, "labels")
    # Graph convolution weights.
    w1 = rng.standard_normal((1, HIDDEN))
    b1 = rng.standard_normal((1, HIDDEN))
    w2 = rng.standard_normal((HIDDEN, 1))
    b2 = rng.standard_normal((1, 1))
    # Global-attention weights.
    we = rng.standard_normal((1, HIDDEN))
    be = rng.standard_normal((1, HIDDEN))
    wq = rng.standard_normal((HIDDEN, HIDDEN))
    wk = rng.standard_normal((HIDDEN, HIDDEN))
    wr = rng.standard_normal((HIDDEN, 1))
    br = rng.standard_normal((1, 1))

    a_norm = normalized_adjacency(g, NormMode.SYMMETRIC)
    h = np.maximum(a_norm @ (latents @ w1) + b1, 0.0)
    y_graph = a_norm @ (h @ w2) + b2

    emb = latents @ we + be
    q = _unit_rows(emb @ wq)
    k = _unit_rows(emb @ wk)
    scores = 1.0 + q @ k.T
    mixed = (scores / scores.sum(axis=1, keepdims=True)) @ emb
    y_global = mixed @ wr + br
    return y_graph + y_global


def _unit_rows(m: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    norms = np.sqrt((m * m).sum(axis=1, keepdims=True))
    return m / np.maximum(norms, eps)


def schedule(kind: ShiftKind, n: int) -> list[SbmParams]:
    """Generation parameters for graphs i = 1..12 of one shift kind.

    homophily: cross-block probability rises with i;
    density: both probabilities rise with i;
    block: the number of blocks grows with i.
    """
    kind = ShiftKind(kind)
    out = []
    for i in range(1, SUITE_SIZE + 1):
        f = (i - 1) / 12.0
        if kind is ShiftKind.HOMOPHILY:
            p = SbmParams(n=n, b=5, p1=0.1, p2=0.01 + 0.05 * f)
        elif kind is ShiftKind.DENSITY:
            p = SbmParams(n=n, b=5, p1=0.1 + 0.1 * f, p2=0.01 + 0.1 * f)
        else:
            p = SbmParams(n=n, b=5 + (i - 1), p1=0.1, p2=0.01)
        out.append(p)
    return out


def make_suite(kind: ShiftKind, seed: int, n: int = 1000) -> ShiftSuite:
    """Generate a full 12-graph suite for one shift kind.

    Latents, features and label weights are shared by every graph; only
    edge sampling (and the schedule) varies with the graph index.
    """
    kind = ShiftKind(kind)
    latents = sample_latents(n, seed)
    features = gen_features(latents, seed)
    params = schedule(kind, n)
    graphs = []
    labels = []
    for i, p in enumerate(params, start=1):
        edge_seed = int(rng_for(seed, "edges", i).integers(2**62))
        g = gen_sbm(latents, p, edge_seed)
        graphs.append(g)
        labels.append(gen_labels(latents, g, seed))
    return ShiftSuite(
        kind=kind,
        seed=int(seed),
        n=int(n),
        latents=latents,
        features=features,
        graphs=graphs,
        labels=labels,
        schedule=params,
    )
