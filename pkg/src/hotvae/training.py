"""Training loop, checkpoints, inference, evaluation and the ablation harnesses."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as M
from .config import RunConfig
from .data import Dataset, Standardizer, carve_validation, find_benchmark, load_dataset, make_splits, standardize
from .label_decoder import LabelGraph, build_prior_graph, complete_graph
from .model import HotVAE, ModelShape, batch_loss, init_model, predict_proba
from .numerics import Adam, NonFiniteError, ShapeError, Tape, backward

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "hotvae-checkpoint/1"
LOG_COLUMNS = ("epoch", "bce", "int", "rank", "kl", "total", "val_maF1")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainResult:
    model: HotVAE
    config: RunConfig
    dataset: Dataset
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_maf1: float = float("nan")
    final_val_maf1: float = float("nan")
    steps: int = 0


def prepare_dataset(config: RunConfig) -> Dataset:
    """Load ``config.dataset`` and apply splits and standardization.

    A path without a suffix names a benchmark: ``<path>-train.arff``/``<path>-test.arff``
    (validation carved from train) or ``<path>.arff`` (ratio splits).
    """
    path = Path(config.dataset)
    if not path.suffix:
        ds = find_benchmark(path.name, path.parent)
        if ds is None:
            raise FileNotFoundError(f"no {path.name}.arff or {path.name}-train/test.arff under {path.parent}")
        if (ds.split == "test").any():
            ds = carve_validation(ds, config.val_fraction, config.seed)
        else:
            ds = make_splits(ds, config.split_ratios, config.seed)
    else:
        ds = load_dataset(path, config.format or None, config.num_labels or None)
        if config.split_files:
            ds = make_splits(ds, index_files=config.split_files)
        else:
            ds = make_splits(ds, config.split_ratios, config.seed)
    return standardize(ds) if config.standardize else ds


def build_graph(config: RunConfig, ds: Dataset) -> LabelGraph:
    if config.graph_mode == "prior":
        return build_prior_graph(ds.labels[ds.split == "train"])
    return complete_graph(ds.num_labels)


def best_threshold_score(probs, truth, metric: str, grid) -> tuple[float, float]:
    p = M.PredictionSet(probs, truth)
    tau = M.select_thresholds(p, (metric,), grid)[metric]
    return tau, M.THRESHOLDED[metric](p.truth, p.probabilities >= tau)


def _snapshot(model: HotVAE) -> list[np.ndarray]:
    return [p.data.copy() for p in model.parameters()]


def _restore(model: HotVAE, arrays: list[np.ndarray]) -> None:
    for p, a in zip(model.parameters(), arrays):
        p.data[...] = a


def train(config: RunConfig, dataset: Dataset | None = None, max_steps: int | None = None) -> TrainResult:
    """Fit both branches end to end and keep the epoch with the best validation maF1.

    With an empty validation split the final epoch is kept.
    """
    ds = dataset if dataset is not None else prepare_dataset(config)
    x_train, y_train = ds.part("train")
    x_val, y_val = ds.part("val")
    if len(x_train) == 0:
        raise ValueError("training split is empty")
    init_seq, shuffle_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(3)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    noise_rng = np.random.default_rng(noise_seq)
    model = init_model(config.model_shape(ds.num_features, ds.num_labels), build_graph(config, ds),
                       np.random.default_rng(init_seq))
    opt = Adam(model.parameters(), lr=config.lr)
    weights = config.weights
    result = TrainResult(model, config, ds)
    best = None
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        totals = dict.fromkeys(LOG_COLUMNS[1:6], 0.0)
        order = shuffle_rng.permutation(len(x_train))
        for start in range(0, len(order), config.batch_size):
            rows = order[start:start + config.batch_size]
            with Tape() as tape:
                try:
                    parts = batch_loss(model, x_train[rows], y_train[rows], weights, noise_rng,
                                       training=True, dropout=config.dropout, inject=config.inject)
                except NonFiniteError as exc:
                    raise TrainingDiverged(f"epoch {epoch}: {exc} during the forward pass") from exc
                bad = [k for k, v in parts.as_row().items() if not math.isfinite(v)]
                if bad:
                    raise TrainingDiverged(f"epoch {epoch}: non-finite loss term(s) {bad}")
                backward(parts.objective, tape)
            opt.step()
            opt.zero_grad()
            result.steps += 1
            for k, v in parts.as_row().items():
                totals[k] += v * len(rows)
            if max_steps is not None and result.steps >= max_steps:
                break
        row = {"epoch": epoch, **{k: v / len(x_train) for k, v in totals.items()}}
        if len(x_val):
            _, row["val_maF1"] = best_threshold_score(predict_proba(model, x_val, config.inject), y_val,
                                                      "maF1", config.threshold_grid)
        else:
            row["val_maF1"] = float("nan")
        result.log.append(row)
        log.info("epoch %d  total %.4f  val maF1 %.4f  (%.1fs)", epoch, row["total"], row["val_maF1"],
                 time.perf_counter() - started)
        if not len(x_val) or best is None or row["val_maF1"] > result.best_val_maf1:
            best = _snapshot(model)
            result.best_epoch, result.best_val_maf1 = epoch, row["val_maF1"]
        if max_steps is not None and result.steps >= max_steps:
            break
    result.final_val_maf1 = result.log[-1]["val_maF1"]
    _restore(model, best)
    return result


def write_loss_log(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in rows:
            writer.writerow([row["epoch"]] + [repr(float(row[k])) for k in LOG_COLUMNS[1:]])


# checkpoints ----------------------------------------------------------------------

def save_checkpoint(result_or_model, path, config: RunConfig | None = None, transform: Standardizer | None = None,
                    epoch: int = 0, label_names=None) -> Path:
    """Write ``manifest.json`` and ``params.bin`` (little-endian float64) into directory ``path``."""
    if isinstance(result_or_model, TrainResult):
        res = result_or_model
        model, config, transform = res.model, res.config, res.dataset.transform
        epoch, label_names = res.best_epoch, res.dataset.label_names
    else:
        model = result_or_model
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    for name, p in model.named_parameters():
        entries.append({"name": name, "shape": list(p.shape), "offset": offset})
        offset += p.data.size
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "shape": {**model.shape.__dict__, "hidden": list(model.shape.hidden)},
        "config": config.to_dict() if config is not None else None,
        "epoch": epoch,
        "rng": {"seed": config.seed if config is not None else None, "generator": "PCG64",
                "streams": ["init", "shuffle", "noise"]},
        "graph": {"mode": model.graph.mode, "num_labels": model.graph.num_labels, "edges": model.graph.edges()},
        "standardizer": transform.to_dict() if transform is not None else None,
        "label_names": list(label_names) if label_names is not None else None,
        "parameters": entries,
        "payload": {"file": "params.bin", "dtype": "<f8", "count": offset},
    }
    flat = np.concatenate([p.data.ravel() for p in model.parameters()]).astype("<f8")
    flat.tofile(path / "params.bin")
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return path


@dataclass
class Checkpoint:
    model: HotVAE
    manifest: dict
    config: RunConfig | None
    transform: Standardizer | None

    @property
    def inject(self) -> str:
        return self.config.inject if self.config is not None else "per-layer"


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    shape_d = manifest["shape"]
    shape = ModelShape(**{**shape_d, "hidden": tuple(shape_d["hidden"])})
    g = manifest["graph"]
    adjacency = np.zeros((g["num_labels"], g["num_labels"]), dtype=bool)
    for i, j in g["edges"]:
        adjacency[i, j] = adjacency[j, i] = True
    model = init_model(shape, LabelGraph(adjacency, g["mode"]), np.random.default_rng(0))
    flat = np.fromfile(path / manifest["payload"]["file"], dtype="<f8")
    if flat.size != manifest["payload"]["count"]:
        raise ValueError("checkpoint payload size does not match its manifest")
    params = dict(model.named_parameters())
    for entry in manifest["parameters"]:
        p = params[entry["name"]]
        if list(p.shape) != entry["shape"]:
            raise ValueError(f"parameter {entry['name']} has shape {entry['shape']}, model wants {p.shape}")
        p.data[...] = flat[entry["offset"]:entry["offset"] + p.data.size].reshape(p.shape)
    config = RunConfig.from_dict(manifest["config"]) if manifest.get("config") else None
    transform = Standardizer.from_dict(manifest["standardizer"]) if manifest.get("standardizer") else None
    return Checkpoint(model, manifest, config, transform)


def predict(checkpoint: Checkpoint, features, raw: bool = True) -> np.ndarray:
    """Label probabilities from the feature branch; ``raw`` features are standardized first."""
    x = np.asarray(features, dtype=np.float64)
    if raw and checkpoint.transform is not None:
        if x.ndim != 2 or x.shape[1] != checkpoint.transform.mean.shape[0]:
            raise ShapeError(f"expected {checkpoint.transform.mean.shape[0]} feature columns, got {x.shape}")
        x = checkpoint.transform.apply(x)
    return predict_proba(checkpoint.model, x, checkpoint.inject)


# evaluation ------------------------------------------------------------------------

def evaluate(model: HotVAE, ds: Dataset, grid=M.DEFAULT_GRID, ecological: bool = False,
             seed: int | None = None, inject: str = "per-layer", split: str = "test") -> M.MetricReport:
    """Thresholds chosen per metric on validation, metrics reported on ``split``."""
    x_eval, y_eval = ds.part(split)
    x_val, y_val = ds.part("val")
    probs = predict_proba(model, x_eval, inject)
    return report_from_predictions(probs, y_eval,
                                   predict_proba(model, x_val, inject) if len(x_val) else None,
                                   y_val if len(x_val) else None, grid, ecological, seed)


def report_from_predictions(probs, truth, val_probs=None, val_truth=None, grid=M.DEFAULT_GRID,
                            ecological: bool = False, seed: int | None = None) -> M.MetricReport:
    if val_probs is not None:
        taus = M.select_thresholds(M.PredictionSet(val_probs, val_truth), M.THRESHOLDED_METRICS, grid)
    else:
        taus = dict.fromkeys(M.THRESHOLDED_METRICS, 0.5)
    report = M.MetricReport()
    for name in M.THRESHOLDED_METRICS:
        report.values[name] = M.THRESHOLDED[name](truth, np.asarray(probs) >= taus[name])
    try:
        _, median_auc, skipped = M.auc_per_label(truth, probs)
    except M.MetricUnavailable:
        median_auc, skipped = float("nan"), list(range(np.shape(truth)[1]))
    report.values["medianAUC"] = median_auc
    report.values["auc_skipped_labels"] = float(len(skipped))
    for name in M.THRESHOLDED_METRICS:
        report.values[f"threshold_{name}"] = taus[name]
    if ecological:
        if seed is None:
            raise ValueError("ecological metrics need a seed")
        report.values.update(M.ecological_report(truth, probs, seed).flat())
    return report


# ablations ------------------------------------------------------------------------

@dataclass
class AblationRow:
    key: str
    value: float
    status: str
    checkpoint: Path | None = None


def _run_and_score(config: RunConfig, ds: Dataset, out_dir: Path | None, metric: str) -> tuple[float, Path | None]:
    res = train(config, ds)
    ckpt = save_checkpoint(res, out_dir) if out_dir is not None else None
    report = evaluate(res.model, res.dataset, config.threshold_grid, inject=config.inject)
    return report[metric], ckpt


def _run_rows(variants, base: RunConfig, ds: Dataset, out_dir, metric: str) -> list[AblationRow]:
    rows = []
    for key, cfg in variants:
        sub = Path(out_dir) / key if out_dir is not None else None
        try:
            value, ckpt = _run_and_score(cfg, ds, sub, metric)
            rows.append(AblationRow(key, value, "ok", ckpt))
        except Exception as exc:  # a failed run is reported in the table, not raised
            log.exception("ablation run %s failed", key)
            rows.append(AblationRow(key, float("nan"), f"failed: {type(exc).__name__}: {exc}"))
    return rows


def ablate_depth(config: RunConfig, n_values=(1, 2, 3, 4, 5), dataset: Dataset | None = None,
                 out_dir=None) -> list[AblationRow]:
    ds = dataset if dataset is not None else prepare_dataset(config)
    variants = [(f"n{n}", config.replace(n_layers=n)) for n in sorted(set(n_values))]
    rows = _run_rows(variants, config, ds, out_dir, "maF1")
    for row in rows:
        row.key = row.key[1:]
    return rows


def ablate_graph(config: RunConfig, dataset: Dataset | None = None, out_dir=None) -> list[AblationRow]:
    ds = dataset if dataset is not None else prepare_dataset(config)
    variants = [(mode, config.replace(graph_mode=mode)) for mode in ("prior", "complete")]
    return _run_rows(variants, config, ds, out_dir, "medianAUC")


def write_ablation_csv(rows: list[AblationRow], path, key_name: str, value_name: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([key_name, value_name, "status"])
        for row in rows:
            writer.writerow([row.key, repr(float(row.value)), row.status])
