"""Multi-label evaluation metrics and the occurrence / richness / community suite.

Inputs are (N samples, L labels) arrays: ``truth`` in {0, 1}, ``probs`` in [0, 1]
and ``pred`` the thresholded 0/1 predictions.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata, spearmanr

DEFAULT_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))
THRESHOLDED_METRICS = ("ebF1", "miF1", "maF1", "HA")


class MetricUnavailable(ValueError):
    pass


@dataclass
class PredictionSet:
    probabilities: np.ndarray
    truth: np.ndarray
    thresholded: np.ndarray | None = None

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.truth = np.asarray(self.truth).astype(np.int8)
        if self.probabilities.shape != self.truth.shape:
            raise ValueError(f"probabilities {self.probabilities.shape} vs truth {self.truth.shape}")

    def at(self, threshold: float) -> "PredictionSet":
        return PredictionSet(self.probabilities, self.truth, (self.probabilities >= threshold).astype(np.int8))


def _check(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth, pred = np.asarray(truth, dtype=np.int64), np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape or truth.ndim != 2:
        raise ValueError(f"truth {truth.shape} and prediction {pred.shape} must be equal 2-D shapes")
    return truth, pred


def _f1(tp, fp, fn):
    """2tp / (2tp + fp + fn), with an empty-vs-empty case scored as 1."""
    tp, fp, fn = (np.asarray(v, dtype=np.float64) for v in (tp, fp, fn))
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1.0), 1.0)


def example_f1(truth, pred) -> float:
    truth, pred = _check(truth, pred)
    tp = (truth * pred).sum(axis=1)
    return float(_f1(tp, ((1 - truth) * pred).sum(axis=1), (truth * (1 - pred)).sum(axis=1)).mean())


def micro_f1(truth, pred) -> float:
    truth, pred = _check(truth, pred)
    tp = (truth * pred).sum()
    return float(_f1(tp, ((1 - truth) * pred).sum(), (truth * (1 - pred)).sum()))


def macro_f1(truth, pred) -> float:
    truth, pred = _check(truth, pred)
    tp = (truth * pred).sum(axis=0)
    return float(_f1(tp, ((1 - truth) * pred).sum(axis=0), (truth * (1 - pred)).sum(axis=0)).mean())


def hamming_accuracy(truth, pred) -> float:
    truth, pred = _check(truth, pred)
    return float((truth == pred).mean())


THRESHOLDED = {"ebF1": example_f1, "miF1": micro_f1, "maF1": macro_f1, "HA": hamming_accuracy}


def f1_scores(p: PredictionSet) -> dict[str, float]:
    if p.thresholded is None:
        raise ValueError("F1 scores need thresholded predictions")
    return {name: THRESHOLDED[name](p.truth, p.thresholded) for name in ("ebF1", "miF1", "maF1")}


def auc_binary(truth_col, score_col) -> float:
    """Mann-Whitney AUC with ties counted as 1/2; NaN when a class is missing."""
    y = np.asarray(truth_col) > 0
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(score_col)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_per_label(truth, probs) -> tuple[np.ndarray, float, list[int]]:
    """Per-label AUC (NaN for skipped labels), their median, and the skipped label indices."""
    truth, probs = np.asarray(truth), np.asarray(probs, dtype=np.float64)
    aucs = np.array([auc_binary(truth[:, k], probs[:, k]) for k in range(truth.shape[1])])
    skipped = np.flatnonzero(np.isnan(aucs)).tolist()
    if len(skipped) == len(aucs):
        raise MetricUnavailable("every label lacks either a positive or a negative sample")
    return aucs, float(np.median(aucs[~np.isnan(aucs)])), skipped


def select_thresholds(p: PredictionSet, metrics=THRESHOLDED_METRICS, grid=DEFAULT_GRID) -> dict[str, float]:
    """Best threshold per metric on the given (validation) predictions; ties go to the smaller one."""
    grid = sorted(grid)
    if not grid:
        raise ValueError("threshold grid is empty")
    best = {}
    for name in metrics:
        fn = THRESHOLDED[name]
        top_tau, top = grid[0], -np.inf
        for tau in grid:
            score = fn(p.truth, p.probabilities >= tau)
            if score > top:
                top_tau, top = tau, score
        best[name] = top_tau
    return best


# ecological suite ------------------------------------------------------------------

def _spearman(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    return float(spearmanr(a, b).statistic)


# ranks and interval checks treat values closer than this as equal, so quantities that are
# equal as rationals (dissimilarities, draw means) but differ in the last bit still tie
TIE_RESOLUTION = 1e-12


def _interval_summary(draws: np.ndarray, truth: np.ndarray) -> dict[str, float]:
    """Accuracy / discrimination / calibration / precision of sampled predictions.

    ``draws`` is (n_draws, n_units); ``truth`` is (n_units,).
    """
    predicted = draws.mean(axis=0)
    lo, hi = np.percentile(draws, [25, 75], axis=0)
    slack = TIE_RESOLUTION * np.maximum(1.0, np.abs(truth))
    inside = ((truth >= lo - slack) & (truth <= hi + slack)).mean()
    return {
        "accuracy": float(np.sqrt(np.mean((predicted - truth) ** 2))),
        "discrimination": _spearman(np.round(predicted, 12), np.round(truth, 12)),
        "calibration": float(abs(inside - 0.5)),
        "precision": float(draws.std(axis=0, ddof=1).mean()),
    }


def occurrence_metrics(truth, probs, bins: int = 10) -> dict[str, float]:
    truth = np.asarray(truth, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    aucs = np.array([auc_binary(truth[:, k], probs[:, k]) for k in range(truth.shape[1])])
    calib = []
    for k in range(truth.shape[1]):
        order = np.argsort(probs[:, k], kind="stable")
        gaps = [abs(probs[b, k].mean() - truth[b, k].mean()) for b in np.array_split(order, bins) if len(b)]
        calib.append(np.mean(gaps))
    return {
        "accuracy": float(np.abs(probs - truth).mean()),
        "discrimination": float(np.nanmean(aucs)) if not np.isnan(aucs).all() else float("nan"),
        "calibration": float(np.mean(calib)),
        "precision": float(np.sqrt(probs * (1.0 - probs)).mean()),
        "auc_skipped": int(np.isnan(aucs).sum()),
    }


def sample_occurrences(probs, rng: np.random.Generator, draws: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    return rng.random((draws,) + probs.shape) < probs


def richness_metrics(truth, probs, rng: np.random.Generator, draws: int = 100) -> dict:
    """Per-location species counts from ``draws`` Bernoulli matrices, scored against the truth."""
    if draws < 2:
        raise ValueError("richness metrics need at least two draws")
    truth = np.asarray(truth)
    samples = sample_occurrences(probs, rng, draws)
    richness = samples.sum(axis=2).astype(np.float64)
    out = _interval_summary(richness, truth.sum(axis=1).astype(np.float64))
    out["resampled_probabilities"] = samples.mean(axis=0)
    return out


def baselga(a, b, c) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(beta_SOR, beta_SIM, beta_NES) from shared (a) and site-unique (b, c) species counts.

    beta_NES is evaluated from its own closed form and beta_SOR is formed as
    beta_SIM + beta_NES, so the decomposition holds exactly in floating point
    while beta_SOR stays within a few ulps of (b + c) / (2a + b + c).
    Two empty sites give 0 for all three; one empty site gives beta_SIM = 0
    (the empty community is nested in the other).
    """
    a, b, c = (np.asarray(v, dtype=np.float64) for v in (a, b, c))
    lo, hi = np.minimum(b, c), np.maximum(b, c)
    sim_den = a + lo
    sim = np.divide(lo, sim_den, out=np.zeros_like(sim_den), where=sim_den > 0)
    sor_den = 2 * a + b + c
    spread = np.divide(hi - lo, sor_den, out=np.zeros_like(sor_den), where=sor_den > 0)
    # a / (a + min(b, c)) is 0/0 when one site is empty; the whole turnover is then nestedness
    shared = np.divide(a, sim_den, out=np.ones_like(sim_den), where=sim_den > 0)
    nes = spread * shared
    return sim + nes, sim, nes


def _pair_components(occ: np.ndarray, first: np.ndarray, second: np.ndarray):
    x, y = occ[..., first, :], occ[..., second, :]
    return (x & y).sum(-1), (x & ~y).sum(-1), (~x & y).sum(-1)


def draw_pairs(n: int, pairs: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    first = rng.integers(0, n, size=pairs)
    second = rng.integers(0, n - 1, size=pairs)
    return first, second + (second >= first)


def community_metrics(truth, probs, rng: np.random.Generator, pairs: int = 300, draws: int = 100) -> dict:
    truth = np.asarray(truth) > 0
    if truth.shape[0] < 2:
        raise ValueError("community metrics need at least two locations")
    first, second = draw_pairs(truth.shape[0], pairs, rng)
    samples = sample_occurrences(probs, rng, draws)
    predicted = baselga(*_pair_components(samples, first, second))
    a, b, c = _pair_components(truth, first, second)
    observed = baselga(a, b, c)
    out = {"empty_pairs": int(((a + b + c) == 0).sum())}
    for key, pred_k, true_k in zip(("sor", "sim", "nes"), predicted, observed):
        out[key] = _interval_summary(pred_k, true_k)
    return out


@dataclass
class EcoReport:
    occurrence: dict
    richness: dict
    community: dict

    def flat(self) -> dict[str, float]:
        rows = {}
        for aspect in ("accuracy", "discrimination", "calibration", "precision"):
            rows[f"occurrence_{aspect}"] = self.occurrence[aspect]
            rows[f"richness_{aspect}"] = self.richness[aspect]
            for key in ("sor", "sim", "nes"):
                rows[f"community_{aspect}_{key}"] = self.community[key][aspect]
        return rows


def ecological_report(truth, probs, seed: int, draws: int = 100, pairs: int = 300) -> EcoReport:
    rich_seq, comm_seq = np.random.SeedSequence(seed).spawn(2)
    return EcoReport(
        occurrence=occurrence_metrics(truth, probs),
        richness=richness_metrics(truth, probs, np.random.default_rng(rich_seq), draws),
        community=community_metrics(truth, probs, np.random.default_rng(comm_seq), pairs, draws),
    )


@dataclass
class MetricReport:
    values: dict[str, float] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("metric,value\n")
        for key, value in self.values.items():
            buf.write(f"{key},{float(value)!r}\n")
        return buf.getvalue()

    def to_table(self) -> str:
        width = max((len(k) for k in self.values), default=6)
        return "\n".join(f"{k:<{width}}  {float(v):.4f}" for k, v in self.values.items())
