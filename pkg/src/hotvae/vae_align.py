"""Gaussian-subspace encoders, reparameterized sampling and latent alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import Tensor, ShapeError


@dataclass
class GaussianSubspaces:
    """``count`` diagonal Gaussians of width ``d``, batched as (B, count, d)."""

    means: Tensor
    variances: Tensor

    @property
    def count(self) -> int:
        return self.means.shape[-2]

    @property
    def dim(self) -> int:
        return self.means.shape[-1]


@dataclass
class EncoderParams:
    """Three-layer MLP: two ReLU hidden layers, then a mean head and a log-variance head."""

    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w_mean: Tensor
    b_mean: Tensor
    w_logvar: Tensor
    b_logvar: Tensor
    count: int = 1

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.w_mean.shape[1] // self.count

    def named_parameters(self, prefix: str = ""):
        for name in ("w1", "b1", "w2", "b2", "w_mean", "b_mean", "w_logvar", "b_logvar"):
            yield prefix + name, getattr(self, name)


def init_encoder(input_dim: int, d: int, rng: np.random.Generator,
                 hidden: tuple[int, int] = (256, 512), count: int = 1) -> EncoderParams:
    h1, h2 = hidden

    def he(fan_in, fan_out, scale=1.0):
        return Tensor(rng.normal(0.0, scale * np.sqrt(2.0 / fan_in), (fan_in, fan_out)), requires_grad=True)

    def zeros(n):
        return Tensor(np.zeros(n), requires_grad=True)

    return EncoderParams(
        w1=he(input_dim, h1), b1=zeros(h1),
        w2=he(h1, h2), b2=zeros(h2),
        w_mean=he(h2, count * d, 0.5), b_mean=zeros(count * d),
        # small log-variance head keeps initial variances near 1
        w_logvar=he(h2, count * d, 0.05), b_logvar=zeros(count * d),
        count=count,
    )


def encode(inputs, params: EncoderParams, dropout: float = 0.0, training: bool = False,
           rng: np.random.Generator | None = None) -> GaussianSubspaces:
    """Map a batch of inputs (B, S) to Gaussian subspaces (B, count, d).

    Variances are ``exp`` of the log-variance head, so they are always positive.
    """
    x = nx.as_tensor(inputs)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ShapeError(f"encoder expects (B, {params.input_dim}) input, got {x.shape}")
    h = nx.relu(nx.linear(x, params.w1, params.b1))
    h = nx.dropout(h, dropout, training, rng)
    h = nx.relu(nx.linear(h, params.w2, params.b2))
    h = nx.dropout(h, dropout, training, rng)
    shape = (x.shape[0], params.count, params.latent_dim)
    means = nx.reshape(nx.linear(h, params.w_mean, params.b_mean), shape)
    logvar = nx.reshape(nx.linear(h, params.w_logvar, params.b_logvar), shape)
    return GaussianSubspaces(means, nx.exp(logvar))


def reparameterize(subspaces: GaussianSubspaces, rng: np.random.Generator) -> Tensor:
    """z = mu + sqrt(var) * eps with eps ~ N(0, I); the noise is a constant for autodiff."""
    eps = rng.standard_normal(subspaces.means.shape)
    return nx.add(subspaces.means, nx.mul(nx.sqrt(subspaces.variances), eps))


def collapse(subspaces: GaussianSubspaces) -> GaussianSubspaces:
    """Average the means and the variances over the subspace axis."""
    return GaussianSubspaces(
        nx.mean(subspaces.means, axis=-2, keepdims=True),
        nx.mean(subspaces.variances, axis=-2, keepdims=True),
    )


def kl_aligned(feature: GaussianSubspaces, label: GaussianSubspaces, beta: float = 1.0) -> Tensor:
    """beta * [sum log(var_f/var_l) - d + sum var_l/var_f + sum (mu_f - mu_l)^2 / var_f].

    This is twice KL(label || feature) for diagonal Gaussians; the 1/2 is left to
    ``beta``. Inputs must already be collapsed; a batch is averaged.
    """
    if feature.count != 1 or label.count != 1:
        raise ShapeError("kl_aligned expects collapsed subspaces (count == 1)")
    if feature.dim != label.dim:
        raise ShapeError(f"latent width mismatch: {feature.dim} vs {label.dim}")
    var_f, var_l = feature.variances, label.variances
    diff = nx.sub(feature.means, label.means)
    bracket = (
        nx.sum_(nx.log(nx.div(var_f, var_l)), axis=-1)
        - feature.dim
        + nx.sum_(nx.div(var_l, var_f), axis=-1)
        + nx.sum_(nx.div(nx.mul(diff, diff), var_f), axis=-1)
    )
    return nx.mul(nx.mean(bracket), beta)
