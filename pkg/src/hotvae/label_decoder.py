"""Shared label decoder: attention message passing over a label graph.

Each decoder layer first lets every label node attend to the latent samples
(feature-to-label injection), then lets label nodes attend to their graph
neighbours (label-to-label). Both passes use multi-head scaled dot-product
attention followed by a position-wise feed-forward, each wrapped as
``layer_norm(x + sublayer(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import Tensor, ParameterError, ShapeError


class DegenerateGraphError(ValueError):
    pass


@dataclass
class LabelGraph:
    adjacency: np.ndarray
    mode: str = "complete"

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ShapeError(f"adjacency must be square, got {adj.shape}")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if adj.diagonal().any():
            raise ValueError("adjacency must not contain self-loops")
        self.adjacency = adj

    @property
    def num_labels(self) -> int:
        return self.adjacency.shape[0]

    def attention_mask(self) -> np.ndarray:
        """Neighbour mask with isolated nodes falling back to attending to themselves."""
        mask = self.adjacency.copy()
        isolated = ~mask.any(axis=1)
        mask[isolated, isolated] = True
        return mask

    def edges(self) -> list[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.adjacency))
        return list(zip(i.tolist(), j.tolist()))


def complete_graph(num_labels: int) -> LabelGraph:
    if num_labels < 2:
        raise DegenerateGraphError("a label graph needs at least two labels")
    return LabelGraph(~np.eye(num_labels, dtype=bool), mode="complete")


def build_prior_graph(labels: np.ndarray) -> LabelGraph:
    """Keep an edge i-j only if some sample carries both labels."""
    y = np.asarray(labels)
    if y.ndim != 2 or y.shape[0] < 1:
        raise ValueError("prior graph needs an (N >= 1, L) label matrix")
    if y.shape[1] < 2:
        raise DegenerateGraphError("a label graph needs at least two labels")
    counts = (y != 0).astype(np.int64)
    co = counts.T @ counts
    np.fill_diagonal(co, 0)
    return LabelGraph(co > 0, mode="prior")


@dataclass
class AttentionBlock:
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    FIELDS = ("wq", "wk", "wv", "wo", "ln1_gain", "ln1_bias",
              "ff_w1", "ff_b1", "ff_w2", "ff_b2", "ln2_gain", "ln2_bias")

    def named_parameters(self, prefix: str = ""):
        for name in self.FIELDS:
            yield prefix + name, getattr(self, name)


@dataclass
class DecoderLayer:
    fy: AttentionBlock
    yy: AttentionBlock


@dataclass
class DecoderParams:
    label_embedding: Tensor  # (L, d), initial node states
    readout: Tensor  # (L, d), row i scores label i
    layers: list[DecoderLayer]
    heads: int

    @property
    def num_labels(self) -> int:
        return self.label_embedding.shape[0]

    @property
    def dim(self) -> int:
        return self.label_embedding.shape[1]

    def named_parameters(self, prefix: str = ""):
        yield prefix + "label_embedding", self.label_embedding
        yield prefix + "readout", self.readout
        for t, layer in enumerate(self.layers):
            yield from layer.fy.named_parameters(f"{prefix}layer{t}.fy.")
            yield from layer.yy.named_parameters(f"{prefix}layer{t}.yy.")


@dataclass
class DecoderTrace:
    probabilities: Tensor  # (B, L)
    intermediates: list[Tensor] = field(default_factory=list)  # n - 1 entries of (B, L)
    attention: list[np.ndarray] = field(default_factory=list)  # label-to-label weights per layer


def _init_block(d: int, rng: np.random.Generator) -> AttentionBlock:
    std = 1.0 / np.sqrt(d)

    def normal(shape, scale):
        return Tensor(rng.normal(0.0, scale, shape), requires_grad=True)

    def const(n, value):
        return Tensor(np.full(n, value, dtype=np.float64), requires_grad=True)

    return AttentionBlock(
        wq=normal((d, d), std), wk=normal((d, d), std), wv=normal((d, d), std), wo=normal((d, d), std),
        ln1_gain=const(d, 1.0), ln1_bias=const(d, 0.0),
        ff_w1=normal((d, 2 * d), np.sqrt(2.0 / d)), ff_b1=const(2 * d, 0.0),
        ff_w2=normal((2 * d, d), np.sqrt(1.0 / (2 * d))), ff_b2=const(d, 0.0),
        ln2_gain=const(d, 1.0), ln2_bias=const(d, 0.0),
    )


def init_decoder(num_labels: int, d: int, n_layers: int, heads: int,
                 rng: np.random.Generator) -> DecoderParams:
    if n_layers < 1:
        raise ParameterError(f"decoder needs at least one layer, got {n_layers}")
    if heads < 1 or d % heads:
        raise ParameterError(f"embedding width {d} is not divisible by {heads} heads")
    std = 1.0 / np.sqrt(d)
    embed = Tensor(rng.normal(0.0, std, (num_labels, d)), requires_grad=True)
    readout = Tensor(rng.normal(0.0, std, (num_labels, d)), requires_grad=True)
    layers = [DecoderLayer(_init_block(d, rng), _init_block(d, rng)) for _ in range(n_layers)]
    return DecoderParams(embed, readout, layers, heads)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, m, d = x.shape
    return nx.transpose(nx.reshape(x, (b, m, heads, d // heads)), (0, 2, 1, 3))


def attention_pass(queries, keys, block: AttentionBlock, heads: int, mask: np.ndarray | None = None,
                   dropout: float = 0.0, training: bool = False,
                   rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray]:
    """Multi-head attention of (B, M, d) queries over (B, P, d) keys with residual + post-norm.

    Returns the updated states and the (B, heads, M, P) attention weights.
    """
    queries, keys = nx.as_tensor(queries), nx.as_tensor(keys)
    b, m, d = queries.shape
    if keys.ndim != 3 or keys.shape[-1] != d or d % heads:
        raise ShapeError(f"attention shapes incompatible: queries {queries.shape}, keys {keys.shape}, heads {heads}")
    q = _split_heads(nx.matmul(queries, block.wq), heads)
    k = _split_heads(nx.matmul(keys, block.wk), heads)
    v = _split_heads(nx.matmul(keys, block.wv), heads)
    scores = nx.matmul(q, nx.transpose(k, (0, 1, 3, 2))) * (1.0 / np.sqrt(d // heads))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        mask = mask[:, None] if mask.ndim == 3 else mask
    alpha = nx.softmax_rows(scores, mask)
    context = nx.reshape(nx.transpose(nx.matmul(alpha, v), (0, 2, 1, 3)), (b, m, d))
    message = nx.dropout(nx.matmul(context, block.wo), dropout, training, rng)
    out = nx.layer_norm(nx.add(queries, message), block.ln1_gain, block.ln1_bias)
    return out, alpha.data


def feed_forward(m, block: AttentionBlock, dropout: float = 0.0, training: bool = False,
                 rng: np.random.Generator | None = None) -> Tensor:
    hidden = nx.relu(nx.linear(m, block.ff_w1, block.ff_b1))
    update = nx.dropout(nx.linear(hidden, block.ff_w2, block.ff_b2), dropout, training, rng)
    return nx.layer_norm(nx.add(m, update), block.ln2_gain, block.ln2_bias)


def decoder_layer(u, z, graph: LabelGraph, layer: DecoderLayer, heads: int, inject: bool = True,
                  dropout: float = 0.0, training: bool = False,
                  rng: np.random.Generator | None = None) -> tuple[Tensor, np.ndarray]:
    """Feature-to-label injection from ``z`` (B, J, d), then masked label-to-label passing."""
    if inject:
        m, _ = attention_pass(u, z, layer.fy, heads, None, dropout, training, rng)
        u = feed_forward(m, layer.fy, dropout, training, rng)
    m, alpha = attention_pass(u, u, layer.yy, heads, graph.attention_mask(), dropout, training, rng)
    return feed_forward(m, layer.yy, dropout, training, rng), alpha


def readout(u, weights) -> Tensor:
    """Per-label probability sigmoid(<weights[i], u[..., i, :]>)."""
    u, weights = nx.as_tensor(u), nx.as_tensor(weights)
    if u.shape[-2:] != weights.shape:
        raise ShapeError(f"readout weights {weights.shape} do not match node states {u.shape}")
    return nx.sigmoid(nx.sum_(nx.mul(u, weights), axis=-1))


def decode(z, graph: LabelGraph, params: DecoderParams, training: bool = False,
           rng: np.random.Generator | None = None, dropout: float = 0.0,
           inject: str = "per-layer") -> DecoderTrace:
    z = nx.as_tensor(z)
    if z.ndim == 2:
        z = nx.reshape(z, (1,) + z.shape)
    if graph.num_labels != params.num_labels:
        raise ShapeError(f"graph has {graph.num_labels} labels, decoder {params.num_labels}")
    if inject not in ("per-layer", "first"):
        raise ParameterError(f"unknown injection mode {inject!r}")
    b = z.shape[0]
    u = nx.add(np.zeros((b, params.num_labels, params.dim)), params.label_embedding)
    trace = DecoderTrace(probabilities=None)
    n = len(params.layers)
    for t, layer in enumerate(params.layers):
        u, alpha = decoder_layer(u, z, graph, layer, params.heads,
                                 inject=(inject == "per-layer" or t == 0),
                                 dropout=dropout, training=training, rng=rng)
        trace.attention.append(alpha)
        if t < n - 1:
            trace.intermediates.append(readout(u, params.readout))
    trace.probabilities = readout(u, params.readout)
    return trace
