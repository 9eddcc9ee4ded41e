"""Training objective: branch BCE, intermediate BCE, pairwise ranking loss and KL alignment.

All terms are means over the batch so the weights do not depend on batch size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import Tensor, ShapeError

PROB_CLAMP = 1e-7


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    bce: float = 1.0  # lambda_0
    inter: float = 0.1  # lambda_1
    rank: float = 1.0  # lambda_2
    kl: float = 1e-4  # beta

    def __post_init__(self):
        if min(self.bce, self.inter, self.rank, self.kl) < 0:
            raise ValueError(f"loss weights must be nonnegative: {self}")


@dataclass
class LossBreakdown:
    bce: float
    inter: float
    rank: float
    kl: float
    total: float
    objective: Tensor | None = field(default=None, repr=False, compare=False)

    def as_row(self) -> dict[str, float]:
        return {"bce": self.bce, "int": self.inter, "rank": self.rank, "kl": self.kl, "total": self.total}


def _as_batch(y, y_hat) -> tuple[np.ndarray, Tensor]:
    y = np.asarray(y, dtype=np.float64)
    y_hat = nx.as_tensor(y_hat)
    if y.shape != y_hat.shape:
        raise ShapeError(f"label shape {y.shape} does not match prediction shape {y_hat.shape}")
    if y.ndim == 1:
        return y[None], nx.reshape(y_hat, (1,) + y_hat.shape)
    return y, y_hat


def bce(y, y_hat) -> Tensor:
    """Binary cross-entropy averaged over labels (and over the batch for 2-D input)."""
    y, y_hat = _as_batch(y, y_hat)
    p = nx.clamp(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = nx.add(nx.mul(y, nx.log(p)), nx.mul(1.0 - y, nx.log(nx.sub(1.0, p))))
    return nx.neg(nx.mean(ll))


def loss_bce(y, y_hat_f, y_hat_l) -> Tensor:
    return nx.add(bce(y, y_hat_f), bce(y, y_hat_l))


def loss_int(y, intermediates_f, intermediates_l, n_layers: int | None = None) -> Tensor:
    if len(intermediates_f) != len(intermediates_l):
        raise ContractError("both branches must supply the same number of intermediate states")
    if n_layers is not None and len(intermediates_f) != n_layers - 1:
        raise ContractError(f"expected {n_layers - 1} intermediate states, got {len(intermediates_f)}")
    total = Tensor(0.0)
    for y_f, y_l in zip(intermediates_f, intermediates_l):
        total = nx.add(total, loss_bce(y, y_f, y_l))
    return total


def ranking_loss(y, y_hat) -> Tensor:
    """Mean over (positive r, negative s) pairs of exp(-(y_hat_r - y_hat_s)).

    Samples without positives or without negatives contribute 0.
    """
    y, y_hat = _as_batch(y, y_hat)
    pos = y > 0.5
    pairs = (pos[:, :, None] & ~pos[:, None, :]).astype(np.float64)
    n_pairs = pairs.sum(axis=(1, 2))
    scale = np.divide(1.0, n_pairs, out=np.zeros_like(n_pairs), where=n_pairs > 0)
    margin = nx.sub(nx.reshape(y_hat, y_hat.shape + (1,)), nx.reshape(y_hat, (y_hat.shape[0], 1, y_hat.shape[1])))
    per_sample = nx.sum_(nx.mul(nx.exp(nx.neg(margin)), pairs), axis=(1, 2))
    return nx.mean(nx.mul(per_sample, scale))


def total_loss(y, trace_f, trace_l, kl, weights: LossWeights) -> LossBreakdown:
    """Weighted four-term objective; ``kl`` is the unweighted alignment bracket."""
    kl = nx.as_tensor(kl)
    terms = {
        "bce": loss_bce(y, trace_f.probabilities, trace_l.probabilities),
        "inter": loss_int(y, trace_f.intermediates, trace_l.intermediates),
        "rank": nx.add(ranking_loss(y, trace_f.probabilities), ranking_loss(y, trace_l.probabilities)),
        "kl": kl,
    }
    objective = (
        nx.mul(terms["bce"], weights.bce)
        + nx.mul(terms["inter"], weights.inter)
        + nx.mul(terms["rank"], weights.rank)
        + nx.mul(terms["kl"], weights.kl)
    )
    values = {k: float(v.data) for k, v in terms.items()}
    return LossBreakdown(total=float(objective.data), objective=objective, **values)
