"""Seeded synthetic multi-label datasets with correlated labels."""

from __future__ import annotations

import numpy as np

from .data import Dataset


def correlated_multilabel(n_samples: int = 600, n_features: int = 20, n_labels: int = 6, n_factors: int = 4,
                          noise: float = 0.5, seed: int = 0, name: str = "synthetic") -> Dataset:
    """Features and labels driven by shared latent factors.

    Labels depend on the factors through a sparse loading matrix plus a chained
    term (label k also responds to label k-1), so labels co-occur in structured ways.
    """
    rng = np.random.default_rng(seed)
    factors = rng.standard_normal((n_samples, n_factors))
    mixing = rng.standard_normal((n_factors, n_features))
    features = factors @ mixing + noise * rng.standard_normal((n_samples, n_features))
    loading = rng.standard_normal((n_factors, n_labels)) * (rng.random((n_factors, n_labels)) < 0.6)
    logits = factors @ loading * 1.5 - 0.5
    labels = np.zeros((n_samples, n_labels), dtype=np.int8)
    for k in range(n_labels):
        chained = 1.2 * labels[:, k - 1] if k else 0.0
        p = 1.0 / (1.0 + np.exp(-(logits[:, k] + chained)))
        labels[:, k] = rng.random(n_samples) < p
    return Dataset(name, features, labels, [f"label{k}" for k in range(n_labels)])


def yeast_like(seed: int = 0) -> Dataset:
    """Same sample, feature and label counts as the multi-label yeast benchmark."""
    return correlated_multilabel(2417, 103, 14, n_factors=8, noise=1.0, seed=seed, name="yeast_like")
