"""Advective diffusion transformers with closed-form propagation.

Node states evolve under a combination of a global attention coupling
(the environment-independent part) and advection along the observed
edges (the topology-dependent part, weighted by beta). Two closed-form
realizations of the steady state are provided:

  * variant "i": per head, solve the dense linear system
        ((1 + theta) I - C_h - beta A~) Z_h = Z(0)
    and sum the head outputs through per-head output maps. theta > beta
    makes the system strictly diagonally dominant, hence nonsingular.

  * variant "s": per head, unroll K propagation steps
        Z^k = C_h Z^{k-1} + beta A~ Z^{k-1}
    starting at Z(0), concatenate [Z^0 | ... | Z^K] column-wise, and map
    through a per-head output matrix. The coupling product uses the
    factored O(n d^2) path and the advection product the edge-list
    scatter kernel (O(|E| d)), so no dense n x n matrix is formed.

Optional edge features enter as per-node messages M (adjacency-weighted
sums of encoded incident-edge features) added to the propagated state:
variant "i" solves against Z(0) + M, variant "s" propagates Z^{k-1} + M.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .attention import AttentionHead, coupling_apply_linear, coupling_dense
from .autodiff import Tape, Var
from .errors import ConfigError, DimensionError
from .graphs import Graph, NormMode, normalized_adjacency, normalized_coo
from .rng import rng_for

log = logging.getLogger(__name__)

__all__ = [
    "TaskKind",
    "ModelConfig",
    "DenseLayer",
    "HeadWeights",
    "ModelParams",
    "init_params",
    "lift_params",
    "encode",
    "forward_i",
    "forward_s",
    "decode",
    "edge_messages",
    "inject_edge_features",
    "save_checkpoint",
    "load_checkpoint",
]


class TaskKind(str, Enum):
    NODE_REGRESSION = "node_regression"
    NODE_CLASSIFICATION = "node_classification"
    GRAPH_CLASSIFICATION = "graph_classification"
    EDGE_REGRESSION = "edge_regression"


@dataclass
class ModelConfig:
    """Hyperparameters shared by both variants.

    `steps` is the unroll depth K of variant "s" (ignored by "i");
    `theta` is the diagonal weight of variant "i" (ignored by "s").
    """

    d: int = 16
    variant: str = "s"
    heads: int = 1
    steps: int = 2
    beta: float = 0.5
    theta: float = 1.0
    norm_mode: NormMode = NormMode.SYMMETRIC
    encoder_layers: int = 2
    allow_unstable_theta: bool = False

    def __post_init__(self):
        self.norm_mode = NormMode(self.norm_mode)
        if self.variant not in ("i", "s"):
            raise ConfigError(f"variant must be 'i' or 's', got {self.variant!r}")
        if self.d < 1 or self.heads < 1 or self.encoder_layers < 1:
            raise ConfigError("d, heads and encoder_layers must be positive")
        if self.steps < 0:
            raise ConfigError("steps must be nonnegative")
        if not np.isfinite(self.beta):
            raise ConfigError("beta must be finite")
        if self.beta < 0.0 or self.beta > 1.0:
            log.warning("beta=%.3g lies outside [0, 1]", self.beta)
        if self.variant == "i" and self.theta <= self.beta and not self.allow_unstable_theta:
            raise ConfigError(
                f"variant 'i' needs theta > beta for a guaranteed nonsingular system "
                f"(theta={self.theta}, beta={self.beta}); pass allow_unstable_theta "
                f"to override"
            )


@dataclass
class DenseLayer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (1, fan_out)


@dataclass
class HeadWeights:
    w_q: np.ndarray  # (d, d)
    w_k: np.ndarray  # (d, d)


@dataclass
class ModelParams:
    """Learnable state of one advective diffusion transformer."""

    encoder: list[DenseLayer]
    heads: list[HeadWeights]
    w_out: list[np.ndarray]  # one output map per head
    decoder: list[DenseLayer]
    edge_encoder: np.ndarray | None = None


def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    return rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / (fan_in + fan_out))


def _mlp_layers(rng, widths: list[int]) -> list[DenseLayer]:
    return [
        DenseLayer(_glorot(rng, a, b), np.zeros((1, b)))
        for a, b in zip(widths[:-1], widths[1:])
    ]


def init_params(
    cfg: ModelConfig,
    in_dim: int,
    out_dim: int,
    seed: int,
    edge_dim: int | None = None,
) -> ModelParams:
    """Draw fresh parameters; identical seeds give identical parameters."""
    rng = rng_for(seed, "model-init", cfg.variant)
    d = cfg.d
    enc_widths = [in_dim] + [d] * cfg.encoder_layers
    blocks = cfg.steps + 1 if cfg.variant == "s" else 1
    params = ModelParams(
        encoder=_mlp_layers(rng, enc_widths),
        heads=[
            HeadWeights(
                rng.standard_normal((d, d)) / np.sqrt(d),
                rng.standard_normal((d, d)) / np.sqrt(d),
            )
            for _ in range(cfg.heads)
        ],
        w_out=[_glorot(rng, blocks * d, d) for _ in range(cfg.heads)],
        decoder=_mlp_layers(rng, [d, d, out_dim]),
        edge_encoder=_glorot(rng, edge_dim, d) if edge_dim else None,
    )
    return params


# ---------------------------------------------------------------------------
# named-array view (optimizers, checkpoints)


def named_arrays(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    out: list[tuple[str, np.ndarray]] = []
    for i, layer in enumerate(params.encoder):
        out.append((f"encoder.{i}.weight", layer.weight))
        out.append((f"encoder.{i}.bias", layer.bias))
    for i, head in enumerate(params.heads):
        out.append((f"head.{i}.w_q", head.w_q))
        out.append((f"head.{i}.w_k", head.w_k))
    for i, w in enumerate(params.w_out):
        out.append((f"w_out.{i}", w))
    for i, layer in enumerate(params.decoder):
        out.append((f"decoder.{i}.weight", layer.weight))
        out.append((f"decoder.{i}.bias", layer.bias))
    if params.edge_encoder is not None:
        out.append(("edge_encoder", params.edge_encoder))
    return out


def _group_layers(named: dict[str, np.ndarray], prefix: str) -> list[DenseLayer]:
    layers = []
    i = 0
    while f"{prefix}.{i}.weight" in named:
        layers.append(DenseLayer(named[f"{prefix}.{i}.weight"], named[f"{prefix}.{i}.bias"]))
        i += 1
    return layers


def params_from_named(named: dict[str, np.ndarray]) -> ModelParams:
    heads = []
    i = 0
    while f"head.{i}.w_q" in named:
        heads.append(HeadWeights(named[f"head.{i}.w_q"], named[f"head.{i}.w_k"]))
        i += 1
    w_out = []
    i = 0
    while f"w_out.{i}" in named:
        w_out.append(named[f"w_out.{i}"])
        i += 1
    return ModelParams(
        encoder=_group_layers(named, "encoder"),
        heads=heads,
        w_out=w_out,
        decoder=_group_layers(named, "decoder"),
        edge_encoder=named.get("edge_encoder"),
    )


def copy_params(params: ModelParams) -> ModelParams:
    return params_from_named({k: v.copy() for k, v in named_arrays(params)})


def lift_params(tape: Tape, params: ModelParams):
    """Wrap every parameter array in a requires_grad leaf on `tape`.

    Returns a structure mirroring ModelParams but holding Vars, plus the
    (name, Var) list used to collect gradients after backward.
    """
    named: list[tuple[str, Var]] = []

    def leaf(name, arr):
        v = tape.var(arr, requires_grad=True)
        named.append((name, v))
        return v

    enc = [
        DenseLayer(leaf(f"encoder.{i}.weight", l.weight), leaf(f"encoder.{i}.bias", l.bias))
        for i, l in enumerate(params.encoder)
    ]
    heads = [
        AttentionHead(leaf(f"head.{i}.w_q", h.w_q), leaf(f"head.{i}.w_k", h.w_k))
        for i, h in enumerate(params.heads)
    ]
    w_out = [leaf(f"w_out.{i}", w) for i, w in enumerate(params.w_out)]
    dec = [
        DenseLayer(leaf(f"decoder.{i}.weight", l.weight), leaf(f"decoder.{i}.bias", l.bias))
        for i, l in enumerate(params.decoder)
    ]
    edge_enc = (
        leaf("edge_encoder", params.edge_encoder) if params.edge_encoder is not None else None
    )
    lifted = ModelParams(encoder=enc, heads=heads, w_out=w_out, decoder=dec, edge_encoder=edge_enc)
    return lifted, named


# ---------------------------------------------------------------------------
# forward passes


def _mlp(x: Var, layers) -> Var:
    """Dense layers with ReLU between them and none after the last."""
    h = x
    last = len(layers) - 1
    for i, layer in enumerate(layers):
        h = ad.add_row(ad.matmul(h, layer.weight), layer.bias)
        if i != last:
            h = ad.relu(h)
    return h


def encode(x: Var, lifted: ModelParams) -> Var:
    """Initial node states Z(0) from raw features."""
    return _mlp(x, lifted.encoder)


def edge_messages(g: Graph, edge_feats: Var, edge_encoder: Var, mode: NormMode) -> Var:
    """Per-node messages from incident-edge features.

    Edge features (one row per canonical edge) are encoded to width d and
    summed into both endpoints, each contribution weighted by the
    normalized adjacency entry of that orientation.
    """
    e = g.edge_count
    if edge_feats.value.shape[0] != e:
        raise DimensionError("edge_messages", edge_feats.value.shape, (e, -1))
    encoded = ad.matmul(edge_feats, edge_encoder)  # (|E|, d)
    rows, _, vals = normalized_coo(g, mode)
    edge_idx = np.concatenate([np.arange(e, dtype=np.int64)] * 2)
    return ad.coo_matmul(rows, edge_idx, vals, encoded, g.n)


def inject_edge_features(
    z_prev: Var, g: Graph, edge_feats: Var, lifted: ModelParams, cfg: ModelConfig
) -> Var:
    """Return z_prev + M for the modified propagation recursions."""
    if lifted.edge_encoder is None:
        raise ConfigError("inject_edge_features: params carry no edge encoder")
    m = edge_messages(g, edge_feats, lifted.edge_encoder, cfg.norm_mode)
    return ad.add(z_prev, m)


def forward_i(
    g: Graph,
    z0: Var,
    lifted: ModelParams,
    cfg: ModelConfig,
    edge_feats: Var | None = None,
) -> Var:
    """Closed-form steady state via one dense linear solve per head."""
    tape = z0.tape
    n = g.n
    if z0.value.shape != (n, cfg.d):
        raise DimensionError("forward_i(z0)", z0.value.shape, (n, cfg.d))
    a_norm = normalized_adjacency(g, cfg.norm_mode)
    base = tape.const((1.0 + cfg.theta) * np.eye(n) - cfg.beta * a_norm)
    rhs = z0
    if edge_feats is not None:
        rhs = inject_edge_features(z0, g, edge_feats, lifted, cfg)
    out = None
    for head, w_out in zip(lifted.heads, lifted.w_out):
        coupling = coupling_dense(z0, head)
        system = ad.sub(base, coupling)
        solved = ad.linsolve(system, rhs)
        term = ad.matmul(solved, w_out)
        out = term if out is None else ad.add(out, term)
    return out


def forward_s(
    g: Graph,
    z0: Var,
    lifted: ModelParams,
    cfg: ModelConfig,
    edge_feats: Var | None = None,
) -> Var:
    """Unrolled propagation with factored attention and edge-list advection.

    With beta == 0 the edge list is never touched, so the output is
    independent of the graph topology by construction.
    """
    n = g.n
    if z0.value.shape != (n, cfg.d):
        raise DimensionError("forward_s(z0)", z0.value.shape, (n, cfg.d))
    use_edges = cfg.beta != 0.0
    if use_edges:
        rows, cols, vals = normalized_coo(g, cfg.norm_mode)
    messages = None
    if edge_feats is not None:
        if lifted.edge_encoder is None:
            raise ConfigError("forward_s: params carry no edge encoder")
        messages = edge_messages(g, edge_feats, lifted.edge_encoder, cfg.norm_mode)
    out = None
    for head, w_out in zip(lifted.heads, lifted.w_out):
        blocks = [z0]
        z = z0
        for _ in range(cfg.steps):
            inp = ad.add(z, messages) if messages is not None else z
            z_next = coupling_apply_linear(z0, head, inp)
            if use_edges:
                adv = ad.coo_matmul(rows, cols, vals, inp, n)
                z_next = ad.add(z_next, ad.scale(adv, cfg.beta))
            blocks.append(z_next)
            z = z_next
        stacked = ad.concat_cols(blocks) if len(blocks) > 1 else blocks[0]
        term = ad.matmul(stacked, w_out)
        out = term if out is None else ad.add(out, term)
    return out


def decode(
    z: Var,
    lifted: ModelParams,
    task: TaskKind,
    pairs: np.ndarray | None = None,
) -> Var:
    """Task read-out head.

    node tasks: per-node MLP; graph task: MLP over the sum-pooled state;
    edge task: MLP over concatenated endpoint states (`pairs` is a
    (k, 2) index array). Classification tasks end in a row softmax.
    """
    task = TaskKind(task)
    tape = z.tape
    if task is TaskKind.GRAPH_CLASSIFICATION:
        pooled = ad.matmul(tape.const(np.ones((1, z.value.shape[0]))), z)
        h = _mlp(pooled, lifted.decoder)
    elif task is TaskKind.EDGE_REGRESSION:
        if pairs is None:
            raise ConfigError("decode: edge task needs a (k, 2) pair index array")
        pairs = np.asarray(pairs, dtype=np.int64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise DimensionError("decode(pairs)", pairs.shape, (-1, 2))
        ends = ad.concat_cols([ad.gather_rows(z, pairs[:, 0]), ad.gather_rows(z, pairs[:, 1])])
        h = _mlp(ends, lifted.decoder)
    else:
        h = _mlp(z, lifted.decoder)
    if task in (TaskKind.NODE_CLASSIFICATION, TaskKind.GRAPH_CLASSIFICATION):
        h = ad.softmax_rows(h)
    return h


# ---------------------------------------------------------------------------
# checkpoints


CHECKPOINT_KIND = "advdiff-checkpoint"


def save_checkpoint(path, named: dict[str, np.ndarray] | list, meta: dict | None = None):
    """Write named parameter arrays as JSON (shape plus row-major data).

    The format is stable: a top-level object with `format_version`,
    `kind`, free-form `meta`, and an `arrays` object mapping each
    parameter name to {"shape": [rows, cols], "data": [floats]}.
    """
    from . import FORMAT_VERSION

    if not isinstance(named, dict):
        named = dict(named)
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": CHECKPOINT_KIND,
        "meta": meta or {},
        "arrays": {
            name: {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}
            for name, arr in named.items()
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    payload = json.loads(Path(path).read_text())
    if payload.get("kind") != CHECKPOINT_KIND:
        raise ConfigError(f"{path}: not a parameter checkpoint")
    arrays = {}
    for name, spec in payload["arrays"].items():
        arr = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        arrays[name] = np.ascontiguousarray(arr)
    return arrays, payload.get("meta", {})
