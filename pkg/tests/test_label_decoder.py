import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hotvae import numerics as nx
from hotvae.label_decoder import (
    DegenerateGraphError, LabelGraph, attention_pass, build_prior_graph, complete_graph, decode,
    decoder_layer, init_decoder, readout,
)
from hotvae.numerics import Tensor


# --- independent oracle: explicit loops over nodes and heads -------------------------------

def ln_oracle(v, gain, bias, eps=1e-5):
    mu = sum(v) / len(v)
    var = sum((x - mu) ** 2 for x in v) / len(v)
    return np.array([(x - mu) / np.sqrt(var + eps) for x in v]) * gain + bias


def attention_oracle(queries, keys, block, heads, mask=None):
    """One sample: queries (M, d), keys (P, d)."""
    p = {k: v.data for k, v in block.named_parameters()}
    m_count, d = queries.shape
    dh = d // heads
    out = np.zeros_like(queries)
    weights = np.zeros((heads, m_count, keys.shape[0]))
    for i in range(m_count):
        context = np.zeros(d)
        for h in range(heads):
            cols = slice(h * dh, (h + 1) * dh)
            q = queries[i] @ p["wq"][:, cols]
            allowed = [j for j in range(keys.shape[0]) if mask is None or mask[i, j]]
            scores = {j: float(q @ (keys[j] @ p["wk"][:, cols])) / np.sqrt(dh) for j in allowed}
            top = max(scores.values())
            total = sum(np.exp(s - top) for s in scores.values())
            for j in allowed:
                a = np.exp(scores[j] - top) / total
                weights[h, i, j] = a
                context[cols] += a * (keys[j] @ p["wv"][:, cols])
        out[i] = ln_oracle(queries[i] + context @ p["wo"], p["ln1_gain"], p["ln1_bias"])
    return out, weights


def ff_oracle(x, block):
    p = {k: v.data for k, v in block.named_parameters()}
    rows = []
    for v in x:
        hidden = np.maximum(v @ p["ff_w1"] + p["ff_b1"], 0.0)
        rows.append(ln_oracle(v + hidden @ p["ff_w2"] + p["ff_b2"], p["ln2_gain"], p["ln2_bias"]))
    return np.array(rows)


def layer_oracle(u, z, mask, layer, heads):
    m, _ = attention_oracle(u, z, layer.fy, heads)
    u = ff_oracle(m, layer.fy)
    m, alpha = attention_oracle(u, u, layer.yy, heads, mask)
    return ff_oracle(m, layer.yy), alpha


# --- graphs -------------------------------------------------------------------------------------

def test_prior_graph_examples():
    y = np.array([[1, 1, 0], [0, 1, 1]])
    assert build_prior_graph(y).edges() == [(0, 1), (1, 2)]
    assert build_prior_graph(np.eye(3)).edges() == []
    assert build_prior_graph(np.ones((2, 4))).adjacency.sum() == 12
    assert complete_graph(3).edges() == [(0, 1), (0, 2), (1, 2)]
    with pytest.raises(DegenerateGraphError):
        build_prior_graph(np.ones((3, 1)))
    with pytest.raises(DegenerateGraphError):
        complete_graph(1)


@settings(max_examples=100, deadline=None)
@given(arrays(np.int8, st.tuples(st.integers(1, 12), st.integers(2, 6)), elements=st.integers(0, 1)))
def test_prior_graph_matches_brute_force(y):
    adj = build_prior_graph(y).adjacency
    n, labels = y.shape
    for i, j in itertools.product(range(labels), repeat=2):
        expected = i != j and any(y[s, i] and y[s, j] for s in range(n))
        assert adj[i, j] == expected
    assert np.array_equal(adj, adj.T) and not adj.diagonal().any()


def test_graph_validation():
    with pytest.raises(ValueError):
        LabelGraph(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        LabelGraph(np.eye(2))
    mask = LabelGraph(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]])).attention_mask()
    assert mask.tolist() == [[False, True, False], [True, False, False], [False, False, True]]


# --- attention ----------------------------------------------------------------------------------

@pytest.fixture
def small_decoder():
    return init_decoder(4, 8, 2, 2, np.random.default_rng(5))


def test_zero_value_weights_reduce_to_layer_norm(small_decoder, rng):
    block = small_decoder.layers[0].yy
    block.wv.data[...] = 0.0
    u = rng.standard_normal((1, 4, 8))
    out, _ = attention_pass(u, u, block, 2)
    expected = nx.layer_norm(u, block.ln1_gain.data, block.ln1_bias.data).data
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-15)


def test_equal_scores_spread_attention_evenly(small_decoder):
    block = small_decoder.layers[0].fy
    block.wq.data[...] = 0.0
    _, alpha = attention_pass(np.ones((1, 2, 8)), np.random.default_rng(0).standard_normal((1, 4, 8)), block, 2)
    np.testing.assert_allclose(alpha, 0.25, rtol=0, atol=1e-15)


def test_attention_matches_per_head_loop(small_decoder, rng):
    block = small_decoder.layers[1].yy
    u = rng.standard_normal((3, 4, 8))
    mask = build_prior_graph(np.array([[1, 1, 0, 0], [0, 1, 1, 0], [0, 0, 0, 1]])).attention_mask()
    out, alpha = attention_pass(u, u, block, 2, mask)
    for b in range(3):
        o, a = attention_oracle(u[b], u[b], block, 2, mask)
        np.testing.assert_allclose(out.data[b], o, rtol=0, atol=1e-12)
        np.testing.assert_allclose(alpha[b], a, rtol=0, atol=1e-12)
    np.testing.assert_allclose(alpha.sum(-1), 1.0, atol=1e-12)


def test_decoder_layer_zero_weights_is_layer_norm_chain(small_decoder, rng):
    layer = small_decoder.layers[0]
    for block in (layer.fy, layer.yy):
        for name in ("wq", "wk", "wv", "wo", "ff_w1", "ff_w2"):
            getattr(block, name).data[...] = 0.0
    u = rng.standard_normal((2, 4, 8))
    out, _ = decoder_layer(u, rng.standard_normal((2, 1, 8)), complete_graph(4), layer, 2)
    expected = u
    for _ in range(4):
        expected = nx.layer_norm(expected, np.ones(8), np.zeros(8)).data
    np.testing.assert_allclose(out.data, expected, rtol=0, atol=1e-12)


def test_decoder_layer_matches_hand_unrolled_oracle(rng):
    params = init_decoder(3, 4, 1, 2, rng)
    graph = LabelGraph(np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]))
    u = rng.standard_normal((2, 3, 4))
    z = rng.standard_normal((2, 1, 4))
    out, alpha = decoder_layer(u, z, graph, params.layers[0], 2)
    for b in range(2):
        o, a = layer_oracle(u[b], z[b], graph.attention_mask(), params.layers[0], 2)
        np.testing.assert_allclose(out.data[b], o, rtol=0, atol=1e-12)
        np.testing.assert_allclose(alpha[b], a, rtol=0, atol=1e-12)


def test_isolated_node_ignores_other_nodes(rng):
    params = init_decoder(3, 4, 1, 2, rng)
    graph = LabelGraph(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]]))
    z = rng.standard_normal((1, 1, 4))
    u = rng.standard_normal((1, 3, 4))
    base, _ = decoder_layer(u, z, graph, params.layers[0], 2)
    u2 = u.copy()
    u2[0, :2] += rng.standard_normal((2, 4))
    moved, alpha = decoder_layer(u2, z, graph, params.layers[0], 2)
    np.testing.assert_allclose(moved.data[0, 2], base.data[0, 2], rtol=0, atol=1e-14)
    np.testing.assert_array_equal(alpha[0, :, 2], [[0.0, 0.0, 1.0]] * 2)


# --- readout and full decoding ----------------------------------------------------------------

def test_readout_examples(rng):
    assert np.all(readout(np.zeros((1, 3, 4)), rng.standard_normal((3, 4))).data == 0.5)
    u = np.array([[[1.0, 1.0], [0.0, 0.0]]])
    mpmath.mp.dps = 30
    assert abs(readout(u, u[0]).data[0, 0] - float(1 / (1 + mpmath.e**-2))) <= 2 * np.spacing(1.0)
    u, w = rng.standard_normal((2, 3, 4)), rng.standard_normal((3, 4))
    logits = np.stack([np.diag(u[b] @ w.T) for b in range(2)])
    np.testing.assert_allclose(readout(u, w).data, 1 / (1 + np.exp(-logits)), rtol=0, atol=1e-15)
    with pytest.raises(nx.ShapeError):
        readout(u, w.T)


def test_zero_readout_gives_one_half(small_decoder, rng):
    small_decoder.readout.data[...] = 0.0
    trace = decode(rng.standard_normal((3, 1, 8)), complete_graph(4), small_decoder)
    assert np.all(trace.probabilities.data == 0.5)
    assert len(trace.intermediates) == 1 and all(np.all(t.data == 0.5) for t in trace.intermediates)


def test_decode_shapes_and_ranges(rng):
    params = init_decoder(5, 8, 3, 2, rng)
    trace = decode(rng.standard_normal((6, 1, 8)), complete_graph(5), params)
    assert trace.probabilities.shape == (6, 5)
    assert len(trace.intermediates) == 2 and len(trace.attention) == 3
    assert np.all((trace.probabilities.data > 0) & (trace.probabilities.data < 1))
    with pytest.raises(nx.ShapeError):
        decode(rng.standard_normal((6, 1, 8)), complete_graph(4), params)
    with pytest.raises(nx.ParameterError):
        init_decoder(5, 9, 2, 2, rng)
    with pytest.raises(nx.ParameterError):
        init_decoder(5, 8, 0, 2, rng)


def test_label_permutation_equivariance(rng):
    params = init_decoder(4, 8, 2, 2, rng)
    graph = LabelGraph(np.array([[0, 1, 1, 0], [1, 0, 0, 0], [1, 0, 0, 1], [0, 0, 1, 0]]))
    z = rng.standard_normal((3, 1, 8))
    base = decode(z, graph, params).probabilities.data
    perm = np.array([2, 0, 3, 1])
    params.label_embedding.data[...] = params.label_embedding.data[perm]
    params.readout.data[...] = params.readout.data[perm]
    permuted = LabelGraph(graph.adjacency[np.ix_(perm, perm)])
    out = decode(z, permuted, params).probabilities.data
    np.testing.assert_allclose(out, base[:, perm], rtol=0, atol=1e-12)


def test_dependence_reaches_n_hops(rng):
    # path graph 0-1-2-3: after n layers label 0 is influenced by node n only if n <= hops
    graph = LabelGraph(np.array([[0, 1, 0, 0], [1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0]]))
    for n in (1, 2, 3):
        params = init_decoder(4, 8, n, 2, np.random.default_rng(n))
        z = rng.standard_normal((1, 1, 8))
        base = decode(z, graph, params).probabilities.data[0, 0]
        for node in range(1, 4):
            # a constant shift would be erased by layer norm, so nudge along a random direction
            nudge = rng.standard_normal(8)
            params.label_embedding.data[node] += nudge
            moved = decode(z, graph, params).probabilities.data[0, 0]
            params.label_embedding.data[node] -= nudge
            assert (abs(moved - base) > 1e-12) == (node <= n), (n, node)


def test_single_layer_gradient_sparsity(rng):
    graph = LabelGraph(np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]))
    params = init_decoder(4, 8, 1, 2, rng)
    z = rng.standard_normal((1, 1, 8))
    reach = graph.adjacency | np.eye(4, dtype=bool)
    for i in range(4):
        params.label_embedding.grad = None
        with nx.Tape() as tape:
            p = decode(z, graph, params).probabilities
            target = nx.sum_(nx.mul(p, np.eye(4)[i][None]))
        nx.backward(target, tape)
        nonzero = np.abs(params.label_embedding.grad).sum(axis=1) > 0
        assert np.array_equal(nonzero, reach[i]), (i, nonzero)


def test_latent_input_changes_attention(rng):
    params = init_decoder(4, 8, 1, 2, rng)
    graph = complete_graph(4)
    a1 = decode(rng.standard_normal((1, 1, 8)), graph, params).attention[0]
    a2 = decode(rng.standard_normal((1, 1, 8)), graph, params).attention[0]
    assert not np.allclose(a1, a2)


def test_first_layer_only_injection_differs(rng):
    params = init_decoder(4, 8, 2, 2, rng)
    z = rng.standard_normal((2, 1, 8))
    every = decode(z, complete_graph(4), params).probabilities.data
    first = decode(z, complete_graph(4), params, inject="first").probabilities.data
    assert not np.allclose(every, first)
    with pytest.raises(nx.ParameterError):
        decode(z, complete_graph(4), params, inject="never")


def test_dropout_only_active_in_training(rng):
    params = init_decoder(4, 8, 2, 2, rng)
    z = rng.standard_normal((2, 1, 8))
    a = decode(z, complete_graph(4), params, dropout=0.5).probabilities.data
    b = decode(z, complete_graph(4), params, dropout=0.5).probabilities.data
    assert a.tobytes() == b.tobytes()
    c = decode(z, complete_graph(4), params, training=True, rng=np.random.default_rng(0), dropout=0.5)
    assert not np.allclose(a, c.probabilities.data)
