"""Model forward passes against closed-form identities and dense
reference oracles, equivariance, gradients, and checkpoint round-trips."""

import numpy as np
import pytest
from conftest import fd_gradient, max_rel_err

from advdiff import autodiff as ad
from advdiff.attention import AttentionHead, coupling_dense
from advdiff.autodiff import Tape
from advdiff.errors import ConfigError, DimensionError
from advdiff.graphs import Graph, NormMode, normalized_adjacency
from advdiff.models import (
    DenseLayer,
    HeadWeights,
    ModelConfig,
    ModelParams,
    TaskKind,
    copy_params,
    decode,
    edge_messages,
    encode,
    forward_i,
    forward_s,
    init_params,
    inject_edge_features,
    lift_params,
    load_checkpoint,
    named_arrays,
    params_from_named,
    save_checkpoint,
)


def ring(n):
    return Graph(n, [(i, (i + 1) % n, 1.0) for i in range(n - 1)] + [(0, n - 1, 1.0)])


def random_graph(n, rng, p=0.3):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    if not pairs:
        pairs = [(0, 1)]
    return Graph(n, [(u, v, 1.0) for u, v in pairs])


def lift_fresh(tape, cfg, in_dim, out_dim, seed, edge_dim=None):
    params = init_params(cfg, in_dim, out_dim, seed, edge_dim=edge_dim)
    lifted, named = lift_params(tape, params)
    return params, lifted, named


# ---------------------------------------------------------------------------
# config guard


def test_config_rejects_theta_not_above_beta():
    with pytest.raises(ConfigError):
        ModelConfig(variant="i", theta=0.5, beta=0.5)
    ModelConfig(variant="i", theta=0.5, beta=0.5, allow_unstable_theta=True)
    ModelConfig(variant="s", theta=0.0, beta=0.5)  # guard only applies to "i"


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        ModelConfig(variant="x")
    with pytest.raises(ConfigError):
        ModelConfig(d=0)
    with pytest.raises(ConfigError):
        ModelConfig(steps=-1)


# ---------------------------------------------------------------------------
# encode


def test_encode_identity_layers_pass_positive_input_through():
    d = 3
    t = Tape()
    lifted = ModelParams(
        encoder=[
            DenseLayer(t.var(np.eye(d)), t.var(np.zeros((1, d)))),
            DenseLayer(t.var(np.eye(d)), t.var(np.zeros((1, d)))),
        ],
        heads=[],
        w_out=[],
        decoder=[],
    )
    x = np.abs(np.random.default_rng(0).standard_normal((5, d))) + 0.1
    out = encode(t.var(x), lifted)
    assert np.allclose(out.value, x, atol=1e-15)


# ---------------------------------------------------------------------------
# forward_i closed forms


def uniform_embedding_head(tape, d):
    # w_q = w_k = 0 makes every q/k row the zero vector: scores all 1,
    # so the coupling is exactly (1/n) 11^T
    return AttentionHead(tape.var(np.zeros((d, d))), tape.var(np.zeros((d, d))))


def test_forward_i_uniform_coupling_sherman_morrison():
    # beta=0, theta=1, C=(1/n)11^T, W_O=I:
    # Z = (2I - (1/n)11^T)^{-1} Z0 = [(1/2)I + (1/(2n))11^T] Z0
    n, d = 6, 3
    rng = np.random.default_rng(1)
    z0_arr = rng.standard_normal((n, d))
    g = ring(n)
    cfg = ModelConfig(d=d, variant="i", heads=1, beta=0.0, theta=1.0)
    t = Tape()
    lifted = ModelParams(
        encoder=[],
        heads=[uniform_embedding_head(t, d)],
        w_out=[t.var(np.eye(d))],
        decoder=[],
    )
    out = forward_i(g, t.var(z0_arr), lifted, cfg)
    expected = (0.5 * np.eye(n) + (1.0 / (2 * n)) * np.ones((n, n))) @ z0_arr
    assert np.abs(out.value - expected).max() < 1e-12
    # brute-force inverse oracle for the same system
    system = 2.0 * np.eye(n) - np.ones((n, n)) / n
    assert np.abs(out.value - np.linalg.inv(system) @ z0_arr).max() < 1e-12


@pytest.mark.parametrize("theta,beta", [(1.0, 0.5), (0.5, 0.2)])
def test_forward_i_constant_rows_scale_by_theta_beta_gap(theta, beta):
    # row mode, constant-row input: L 1 = (theta - beta) 1, so the solve
    # rescales the input by 1/(theta - beta)
    n, d = 8, 4
    g = ring(n)
    c = np.arange(1.0, d + 1.0)
    z0_arr = np.ones((n, 1)) @ c[None, :]
    cfg = ModelConfig(d=d, variant="i", heads=1, beta=beta, theta=theta, norm_mode=NormMode.ROW)
    t = Tape()
    lifted = ModelParams(
        encoder=[],
        heads=[uniform_embedding_head(t, d)],
        w_out=[t.var(np.eye(d))],
        decoder=[],
    )
    out = forward_i(g, t.var(z0_arr), lifted, cfg)
    assert np.abs(out.value - z0_arr / (theta - beta)).max() < 1e-9


def test_forward_i_matches_dense_inverse_oracle():
    n, d = 9, 3
    rng = np.random.default_rng(2)
    g = random_graph(n, rng)
    z0_arr = rng.standard_normal((n, d))
    cfg = ModelConfig(d=d, variant="i", heads=2, beta=0.4, theta=1.0)
    t = Tape()
    heads = [
        AttentionHead(
            t.var(rng.standard_normal((d, d))), t.var(rng.standard_normal((d, d)))
        )
        for _ in range(2)
    ]
    w_out = [t.var(rng.standard_normal((d, d))) for _ in range(2)]
    lifted = ModelParams(encoder=[], heads=heads, w_out=w_out, decoder=[])
    z0 = t.var(z0_arr)
    out = forward_i(g, z0, lifted, cfg)
    a_norm = normalized_adjacency(g, cfg.norm_mode)
    expected = np.zeros((n, d))
    for head, w in zip(heads, w_out):
        c = coupling_dense(z0, head).value
        system = (1.0 + cfg.theta) * np.eye(n) - c - cfg.beta * a_norm
        expected += np.linalg.inv(system) @ z0_arr @ w.value
    assert np.abs(out.value - expected).max() < 1e-10


def test_forward_i_permutation_equivariance():
    n, d = 7, 3
    rng = np.random.default_rng(3)
    g = random_graph(n, rng)
    perm = rng.permutation(n)
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    g_perm = Graph(n, [(int(inv[u]), int(inv[v]), w) for u, v, w in g.edges()])
    z0_arr = rng.standard_normal((n, d))
    cfg = ModelConfig(d=d, variant="i", heads=1, beta=0.3, theta=1.0)
    wq = rng.standard_normal((d, d))
    wk = rng.standard_normal((d, d))
    wo = rng.standard_normal((d, d))

    def run(graph, z_arr):
        t = Tape()
        lifted = ModelParams(
            encoder=[], heads=[AttentionHead(t.var(wq), t.var(wk))], w_out=[t.var(wo)], decoder=[]
        )
        return forward_i(graph, t.var(z_arr), lifted, cfg).value

    base = run(g, z0_arr)
    permuted = run(g_perm, z0_arr[perm])
    assert np.abs(permuted - base[perm]).max() < 1e-9


# ---------------------------------------------------------------------------
# forward_s


def test_forward_s_k0_sums_output_maps():
    n, d = 5, 3
    rng = np.random.default_rng(4)
    g = ring(n)
    z0_arr = rng.standard_normal((n, d))
    cfg = ModelConfig(d=d, variant="s", heads=2, steps=0, beta=0.5)
    t = Tape()
    heads = [
        AttentionHead(t.var(rng.standard_normal((d, d))), t.var(rng.standard_normal((d, d))))
        for _ in range(2)
    ]
    w_out = [t.var(rng.standard_normal((d, d))) for _ in range(2)]
    lifted = ModelParams(encoder=[], heads=heads, w_out=w_out, decoder=[])
    out = forward_s(g, t.var(z0_arr), lifted, cfg)
    expected = z0_arr @ (w_out[0].value + w_out[1].value)
    assert np.abs(out.value - expected).max() < 1e-12


def test_forward_s_beta0_k1_selector_recovers_dense_step():
    n, d = 6, 3
    rng = np.random.default_rng(5)
    g = ring(n)
    z0_arr = rng.standard_normal((n, d))
    cfg = ModelConfig(d=d, variant="s", heads=1, steps=1, beta=0.0)
    t = Tape()
    head = AttentionHead(t.var(rng.standard_normal((d, d))), t.var(rng.standard_normal((d, d))))
    selector = np.vstack([np.zeros((d, d)), np.eye(d)])  # picks the order-1 block
    lifted = ModelParams(encoder=[], heads=[head], w_out=[t.var(selector)], decoder=[])
    z0 = t.var(z0_arr)
    out = forward_s(g, z0, lifted, cfg)
    dense_step = ad.matmul(coupling_dense(z0, head), z0)
    assert np.abs(out.value - dense_step.value).max() < 1e-10


def test_forward_s_matches_dense_reference():
    # dense oracle: P_h = C_h + beta*A~ materialized, multiplied explicitly
    n, d = 40, 4
    rng = np.random.default_rng(6)
    g = random_graph(n, rng, p=0.15)
    z0_arr = rng.standard_normal((n, d))
    cfg = ModelConfig(d=d, variant="s", heads=2, steps=3, beta=0.7)
    t = Tape()
    heads = [
        AttentionHead(t.var(rng.standard_normal((d, d))), t.var(rng.standard_normal((d, d))))
        for _ in range(cfg.heads)
    ]
    w_out = [
        t.var(rng.standard_normal(((cfg.steps + 1) * d, d))) for _ in range(cfg.heads)
    ]
    lifted = ModelParams(encoder=[], heads=heads, w_out=w_out, decoder=[])
    z0 = t.var(z0_arr)
    out = forward_s(g, z0, lifted, cfg)

    a_norm = normalized_adjacency(g, cfg.norm_mode)
    expected = np.zeros((n, d))
    for head, w in zip(heads, w_out):
        c = coupling_dense(z0, head).value
        p = c + cfg.beta * a_norm
        blocks = [z0_arr]
        z = z0_arr
        for _ in range(cfg.steps):
            z = p @ z
            blocks.append(z)
        expected += np.hstack(blocks) @ w.value
    assert np.abs(out.value - expected).max() < 1e-9


def test_forward_s_beta0_ignores_topology():
    n, d = 12, 3
    rng = np.random.default_rng(7)
    z0_arr = rng.standard_normal((n, d))
    cfg = ModelConfig(d=d, variant="s", heads=1, steps=2, beta=0.0)
    wq = rng.standard_normal((d, d))
    wk = rng.standard_normal((d, d))
    wo = rng.standard_normal((3 * d, d))

    def run(graph):
        t = Tape()
        lifted = ModelParams(
            encoder=[], heads=[AttentionHead(t.var(wq), t.var(wk))], w_out=[t.var(wo)], decoder=[]
        )
        return forward_s(graph, t.var(z0_arr), lifted, cfg).value

    outs = [run(random_graph(n, np.random.default_rng(s), p=0.4)) for s in range(4)]
    outs.append(run(Graph(n, [(0, 1, 1.0)])))
    for other in outs[1:]:
        assert np.abs(other - outs[0]).max() < 1e-12


def test_forward_s_permutation_equivariance():
    n, d = 8, 3
    rng = np.random.default_rng(8)
    g = random_graph(n, rng)
    perm = rng.permutation(n)
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)
    g_perm = Graph(n, [(int(inv[u]), int(inv[v]), w) for u, v, w in g.edges()])
    z0_arr = rng.standard_normal((n, d))
    cfg = ModelConfig(d=d, variant="s", heads=1, steps=2, beta=0.6)
    wq = rng.standard_normal((d, d))
    wk = rng.standard_normal((d, d))
    wo = rng.standard_normal((3 * d, d))

    def run(graph, z_arr):
        t = Tape()
        lifted = ModelParams(
            encoder=[], heads=[AttentionHead(t.var(wq), t.var(wk))], w_out=[t.var(wo)], decoder=[]
        )
        return forward_s(graph, t.var(z_arr), lifted, cfg).value

    base = run(g, z0_arr)
    permuted = run(g_perm, z0_arr[perm])
    assert np.abs(permuted - base[perm]).max() < 1e-9


def test_forward_shape_guards():
    g = ring(5)
    cfg = ModelConfig(d=3, variant="s")
    t = Tape()
    _, lifted, _ = lift_fresh(t, cfg, 3, 1, seed=0)
    with pytest.raises(DimensionError):
        forward_s(g, t.var(np.zeros((4, 3))), lifted, cfg)
    cfg_i = ModelConfig(d=3, variant="i")
    with pytest.raises(DimensionError):
        forward_i(g, t.var(np.zeros((5, 2))), lifted, cfg_i)


# ---------------------------------------------------------------------------
# decode


def test_decode_node_identity():
    d = 3
    t = Tape()
    lifted = ModelParams(
        encoder=[],
        heads=[],
        w_out=[],
        decoder=[DenseLayer(t.var(np.eye(d)), t.var(np.zeros((1, d))))],
    )
    z_arr = np.random.default_rng(9).standard_normal((4, d))
    out = decode(t.var(z_arr), lifted, TaskKind.NODE_REGRESSION)
    assert np.allclose(out.value, z_arr, atol=1e-15)


def test_decode_graph_pool_on_zero_state_gives_bias():
    d, out_dim = 3, 2
    t = Tape()
    bias = np.array([[0.3, -0.7]])
    lifted = ModelParams(
        encoder=[],
        heads=[],
        w_out=[],
        decoder=[DenseLayer(t.var(np.zeros((d, out_dim))), t.var(bias))],
    )
    out = decode(t.var(np.zeros((5, d))), lifted, TaskKind.GRAPH_CLASSIFICATION)
    # graph task ends in softmax over the bias row
    e = np.exp(bias - bias.max())
    assert np.allclose(out.value, e / e.sum(), atol=1e-15)
    assert out.value.shape == (1, out_dim)


def test_decode_edge_concat_order():
    d = 2
    t = Tape()
    lifted = ModelParams(
        encoder=[],
        heads=[],
        w_out=[],
        decoder=[DenseLayer(t.var(np.eye(2 * d)), t.var(np.zeros((1, 2 * d))))],
    )
    z_arr = np.arange(8.0).reshape(4, d)
    pairs = np.array([[0, 3], [2, 1]])
    out = decode(t.var(z_arr), lifted, TaskKind.EDGE_REGRESSION, pairs=pairs)
    expected = np.hstack([z_arr[pairs[:, 0]], z_arr[pairs[:, 1]]])
    assert np.array_equal(out.value, expected)


def test_decode_edge_task_needs_pairs():
    t = Tape()
    lifted = ModelParams(
        encoder=[], heads=[], w_out=[], decoder=[DenseLayer(t.var(np.eye(4)), t.var(np.zeros((1, 4))))]
    )
    with pytest.raises(ConfigError):
        decode(t.var(np.zeros((3, 2))), lifted, TaskKind.EDGE_REGRESSION)


def test_decode_classification_rows_are_distributions():
    cfg = ModelConfig(d=4, variant="s")
    t = Tape()
    _, lifted, _ = lift_fresh(t, cfg, 4, 3, seed=1)
    z = t.var(np.random.default_rng(10).standard_normal((6, 4)))
    out = decode(z, lifted, TaskKind.NODE_CLASSIFICATION)
    assert np.allclose(out.value.sum(axis=1), 1.0, atol=1e-12)
    assert (out.value > 0).all()


# ---------------------------------------------------------------------------
# edge features


def test_edge_messages_scalar_loop_oracle():
    rng = np.random.default_rng(11)
    n, de, d = 6, 2, 3
    g = random_graph(n, rng, p=0.5)
    e = g.edge_count
    feats = rng.standard_normal((e, de))
    w_e = rng.standard_normal((de, d))
    t = Tape()
    out = edge_messages(g, t.var(feats), t.var(w_e), NormMode.SYMMETRIC)
    a_norm = normalized_adjacency(g, NormMode.SYMMETRIC)
    expected = np.zeros((n, d))
    for idx, (u, v, _) in enumerate(g.edges()):
        enc = feats[idx] @ w_e
        expected[u] += a_norm[u, v] * enc
        expected[v] += a_norm[v, u] * enc
    assert np.abs(out.value - expected).max() < 1e-12


def test_inject_zero_edge_features_is_identity():
    rng = np.random.default_rng(12)
    n, d = 5, 3
    g = ring(n)
    cfg = ModelConfig(d=d, variant="s")
    t = Tape()
    _, lifted, _ = lift_fresh(t, cfg, d, 1, seed=2, edge_dim=2)
    z = t.var(rng.standard_normal((n, d)))
    out = inject_edge_features(z, g, t.var(np.zeros((g.edge_count, 2))), lifted, cfg)
    assert np.array_equal(out.value, z.value)


def test_inject_edge_features_requires_encoder():
    g = ring(4)
    cfg = ModelConfig(d=3, variant="s")
    t = Tape()
    _, lifted, _ = lift_fresh(t, cfg, 3, 1, seed=3)  # no edge_dim
    with pytest.raises(ConfigError):
        inject_edge_features(t.var(np.zeros((4, 3))), g, t.var(np.zeros((g.edge_count, 2))), lifted, cfg)


def test_edge_feature_row_count_checked():
    g = ring(4)
    t = Tape()
    with pytest.raises(DimensionError):
        edge_messages(g, t.var(np.zeros((2, 3))), t.var(np.zeros((3, 3))), NormMode.SYMMETRIC)


# ---------------------------------------------------------------------------
# gradients through the full stack


@pytest.mark.parametrize("variant", ["i", "s"])
def test_full_model_gradients_match_finite_differences(variant):
    n, in_dim, out_dim = 10, 3, 2
    rng = np.random.default_rng(13)
    g = random_graph(n, rng)
    x_arr = rng.standard_normal((n, in_dim))
    y = rng.standard_normal((n, out_dim))
    cfg = ModelConfig(d=4, variant=variant, heads=1, steps=2, beta=0.4, theta=1.0)
    params = init_params(cfg, in_dim, out_dim, seed=5)
    names = [name for name, _ in named_arrays(params)]
    forward = forward_i if variant == "i" else forward_s

    def loss_value(arrs):
        t = Tape()
        lifted, _ = lift_params(t, params_from_named(dict(zip(names, arrs))))
        z0 = encode(t.var(x_arr), lifted)
        z = forward(g, z0, lifted, cfg)
        pred = decode(z, lifted, TaskKind.NODE_REGRESSION)
        diff = ad.sub(pred, t.const(y))
        return float(ad.sum_all(ad.mul(diff, diff)).value[0, 0])

    t = Tape()
    lifted, named = lift_params(t, params)
    z0 = encode(t.var(x_arr), lifted)
    z = forward(g, z0, lifted, cfg)
    pred = decode(z, lifted, TaskKind.NODE_REGRESSION)
    diff = ad.sub(pred, t.const(y))
    grads = t.backward(ad.sum_all(ad.mul(diff, diff)))

    arrays = [arr.copy() for _, arr in named_arrays(params)]
    fd = fd_gradient(loss_value, arrays)
    for (name, var), f in zip(named, fd):
        err = max_rel_err(grads[var.id], f, floor=1e-5)
        assert err < 1e-4, f"{name}: rel err {err:.3g}"


# ---------------------------------------------------------------------------
# params plumbing


def test_named_arrays_round_trip():
    cfg = ModelConfig(d=4, variant="s", heads=2, steps=1)
    params = init_params(cfg, 3, 2, seed=7, edge_dim=2)
    rebuilt = params_from_named(dict(named_arrays(params)))
    for (na, a), (nb, b) in zip(named_arrays(params), named_arrays(rebuilt)):
        assert na == nb
        assert np.array_equal(a, b)


def test_copy_params_is_deep():
    cfg = ModelConfig(d=3, variant="s")
    params = init_params(cfg, 2, 1, seed=8)
    clone = copy_params(params)
    clone.encoder[0].weight[0, 0] += 1.0
    assert params.encoder[0].weight[0, 0] != clone.encoder[0].weight[0, 0]


def test_init_params_deterministic_per_seed():
    cfg = ModelConfig(d=4, variant="i", theta=1.0, beta=0.5)
    a = init_params(cfg, 3, 2, seed=9)
    b = init_params(cfg, 3, 2, seed=9)
    c = init_params(cfg, 3, 2, seed=10)
    for (_, x), (_, y) in zip(named_arrays(a), named_arrays(b)):
        assert np.array_equal(x, y)
    assert any(
        not np.array_equal(x, y)
        for (_, x), (_, y) in zip(named_arrays(a), named_arrays(c))
    )


def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig(d=4, variant="s", heads=2, steps=2)
    params = init_params(cfg, 3, 2, seed=11, edge_dim=2)
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, dict(named_arrays(params)), meta={"model": "advdifformer_s"})
    arrays, meta = load_checkpoint(path)
    assert meta == {"model": "advdifformer_s"}
    for name, arr in named_arrays(params):
        assert np.array_equal(arrays[name], arr), name
    # byte-identical rewrite
    second = tmp_path / "ckpt2.json"
    save_checkpoint(second, arrays, meta={"model": "advdifformer_s"})
    assert path.read_bytes() == second.read_bytes()


def test_checkpoint_kind_checked(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"kind": "something-else", "arrays": {}}')
    with pytest.raises(ConfigError):
        load_checkpoint(path)
