"""The two-branch model: feature encoder, label encoder, shared label decoder."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .label_decoder import DecoderParams, DecoderTrace, LabelGraph, decode, init_decoder
from .losses import LossBreakdown, LossWeights, total_loss
from .numerics import ShapeError, Tensor
from .vae_align import EncoderParams, collapse, encode, init_encoder, kl_aligned, reparameterize


def default_heads(d: int) -> int:
    return 4 if d >= 64 else 2


@dataclass(frozen=True)
class ModelShape:
    input_dim: int
    num_labels: int
    d: int = 100
    n_layers: int = 2
    heads: int = 4
    hidden: tuple[int, int] = (256, 512)


@dataclass
class HotVAE:
    shape: ModelShape
    feature_encoder: EncoderParams
    label_encoder: EncoderParams
    decoder: DecoderParams
    graph: LabelGraph

    def named_parameters(self):
        yield from self.feature_encoder.named_parameters("feature_encoder.")
        yield from self.label_encoder.named_parameters("label_encoder.")
        yield from self.decoder.named_parameters("decoder.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]


def init_model(shape: ModelShape, graph: LabelGraph, rng: np.random.Generator) -> HotVAE:
    if graph.num_labels != shape.num_labels:
        raise ShapeError(f"graph has {graph.num_labels} labels, model expects {shape.num_labels}")
    return HotVAE(
        shape=shape,
        feature_encoder=init_encoder(shape.input_dim, shape.d, rng, shape.hidden),
        label_encoder=init_encoder(shape.num_labels, shape.d, rng, shape.hidden),
        decoder=init_decoder(shape.num_labels, shape.d, shape.n_layers, shape.heads, rng),
        graph=graph,
    )


def forward(model: HotVAE, x, y, rng: np.random.Generator, training: bool = True,
            dropout: float = 0.0, inject: str = "per-layer") -> tuple[DecoderTrace, DecoderTrace, Tensor]:
    """Run both branches; returns (feature trace, label trace, unweighted KL bracket)."""
    enc_f = encode(x, model.feature_encoder, dropout, training, rng)
    enc_l = encode(y, model.label_encoder, dropout, training, rng)
    z_f = reparameterize(enc_f, rng)
    z_l = reparameterize(enc_l, rng)
    kl = kl_aligned(collapse(enc_f), collapse(enc_l), beta=1.0)
    trace_f = decode(z_f, model.graph, model.decoder, training, rng, dropout, inject)
    trace_l = decode(z_l, model.graph, model.decoder, training, rng, dropout, inject)
    return trace_f, trace_l, kl


def batch_loss(model: HotVAE, x, y, weights: LossWeights, rng: np.random.Generator,
               training: bool = True, dropout: float = 0.0, inject: str = "per-layer") -> LossBreakdown:
    trace_f, trace_l, kl = forward(model, x, y, rng, training, dropout, inject)
    return total_loss(y, trace_f, trace_l, kl, weights)


def predict_proba(model: HotVAE, x, inject: str = "per-layer", batch_size: int = 512) -> np.ndarray:
    """Feature branch only, with z set to the posterior mean and dropout off."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.shape.input_dim:
        raise ShapeError(f"expected features of shape (N, {model.shape.input_dim}), got {x.shape}")
    out = []
    for start in range(0, x.shape[0], batch_size):
        enc = encode(x[start:start + batch_size], model.feature_encoder)
        trace = decode(enc.means, model.graph, model.decoder, training=False, inject=inject)
        out.append(trace.probabilities.data)
    if not out:
        return np.zeros((0, model.shape.num_labels))
    return np.concatenate(out, axis=0)
