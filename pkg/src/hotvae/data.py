"""Multi-label datasets: CSV / ARFF loading, splits, standardization, label statistics."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

LABEL_PREFIX = "label:"
SPLITS = ("train", "val", "test")

# label counts of the MULAN releases; their ARFF headers do not say which attributes are labels
KNOWN_LABEL_COUNTS = {"yeast": 14, "scene": 6}


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class ValidationError(ValueError):
    pass


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["scale"], dtype=np.float64))


@dataclass
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    label_names: list[str]
    feature_names: list[str] = field(default_factory=list)
    split: np.ndarray | None = None
    transform: Standardizer | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if self.features.ndim != 2 or labels.ndim != 2 or labels.shape[0] != self.features.shape[0]:
            raise ValidationError(f"features {self.features.shape} and labels {labels.shape} disagree")
        if not np.isin(labels, (0, 1)).all():
            raise ValidationError("label values must be 0 or 1")
        if not np.isfinite(self.features).all():
            raise ValidationError("features contain NaN or infinite values")
        self.labels = labels.astype(np.int8)
        if len(self.label_names) != labels.shape[1]:
            raise ValidationError("one name per label column is required")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.num_features)]
        if self.split is None:
            self.split = np.full(self.num_samples, "train", dtype="<U5")
        else:
            self.split = np.asarray(self.split, dtype="<U5")
            if self.split.shape != (self.num_samples,) or not np.isin(self.split, SPLITS).all():
                raise ValidationError("split must assign train/val/test to every sample")

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_labels(self) -> int:
        return self.labels.shape[1]

    def part(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        rows = self.split == which
        return self.features[rows], self.labels[rows].astype(np.float64)


@dataclass(frozen=True)
class LabelStats:
    mean_labels_per_sample: float
    median_labels_per_sample: float
    max_labels_per_sample: float
    mean_samples_per_label: float
    median_samples_per_label: float
    max_samples_per_label: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# loading --------------------------------------------------------------------------

def load_dataset(path, format: str | None = None, num_labels: int | None = None,
                 name: str | None = None) -> Dataset:
    path = Path(path)
    fmt = format or ("csv" if path.suffix.lower() == ".csv" else "arff")
    name = name or path.stem
    if fmt == "csv":
        return _load_csv(path, name)
    if fmt in ("arff", "arff-sparse"):
        if num_labels is None:
            num_labels = KNOWN_LABEL_COUNTS.get(name.split("-")[0])
        if num_labels is None:
            raise ValueError("ARFF input needs the label count (--num-labels)")
        return _load_arff(path, num_labels, name)
    raise ValueError(f"unknown dataset format {fmt!r}")


def _load_csv(path: Path, name: str) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        is_label = [h.startswith(LABEL_PREFIX) for h in header]
        if not any(is_label):
            raise ParseError(f"no '{LABEL_PREFIX}' columns in header", 1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    table = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    mask = np.array(is_label)
    labels = table[:, mask]
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValidationError("label columns must contain only 0 and 1")
    return Dataset(
        name=name,
        features=table[:, ~mask],
        labels=labels.astype(np.int8),
        label_names=[h[len(LABEL_PREFIX):] for h, m in zip(header, is_label) if m],
        feature_names=[h for h, m in zip(header, is_label) if not m],
    )


def save_csv(ds: Dataset, path) -> None:
    header = list(ds.feature_names) + [LABEL_PREFIX + n for n in ds.label_names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for x, y in zip(ds.features, ds.labels):
            writer.writerow([repr(float(v)) for v in x] + [str(int(v)) for v in y])


_ATTRIBUTE = re.compile(r"@attribute\s+('(?:[^']*)'|\"(?:[^\"]*)\"|\S+)\s+(.+)$", re.IGNORECASE)


def _load_arff(path: Path, num_labels: int, name: str) -> Dataset:
    names: list[str] = []
    rows: list[np.ndarray] = []
    in_data = False
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if not in_data:
                low = line.lower()
                if low.startswith("@attribute"):
                    match = _ATTRIBUTE.match(line)
                    if not match:
                        raise ParseError("malformed @attribute declaration", lineno)
                    names.append(match.group(1).strip("'\""))
                elif low.startswith("@data"):
                    in_data = True
                    if len(names) <= num_labels:
                        raise ParseError(f"{len(names)} attributes cannot hold {num_labels} labels", lineno)
                elif not low.startswith("@relation"):
                    raise ParseError(f"unexpected header line {line[:40]!r}", lineno)
                continue
            rows.append(_parse_arff_row(line, len(names), lineno))
    if not in_data:
        raise ParseError("missing @data section")
    table = np.vstack(rows) if rows else np.zeros((0, len(names)))
    labels = table[:, -num_labels:]
    if not np.isin(labels, (0.0, 1.0)).all():
        raise ValidationError("label attributes must contain only 0 and 1")
    return Dataset(
        name=name,
        features=table[:, :-num_labels],
        labels=labels.astype(np.int8),
        label_names=names[-num_labels:],
        feature_names=names[:-num_labels],
    )


def _parse_arff_row(line: str, width: int, lineno: int) -> np.ndarray:
    row = np.zeros(width)
    try:
        if line.startswith("{"):
            if not line.endswith("}"):
                raise ParseError("unterminated sparse row", lineno)
            body = line[1:-1].strip()
            for item in filter(None, (s.strip() for s in body.split(","))):
                idx, value = item.split()
                col = int(idx)
                if not 0 <= col < width:
                    raise ParseError(f"sparse index {col} outside 0..{width - 1}", lineno)
                row[col] = float(value)
        else:
            values = [v.strip().strip("'\"") for v in line.split(",")]
            if len(values) != width:
                raise ParseError(f"expected {width} values, found {len(values)}", lineno)
            row[:] = [float(v) for v in values]
    except ParseError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None
    return row


def find_benchmark(name: str, data_dir, num_labels: int | None = None) -> Dataset | None:
    """Locate ``<name>.arff`` or a ``<name>-train.arff``/``<name>-test.arff`` pair under ``data_dir``.

    For the pair layout the original test split is kept and the split column marks
    train rows as ``train`` and test rows as ``test``; carve validation with
    :func:`carve_validation`.
    """
    data_dir = Path(data_dir)
    single = data_dir / f"{name}.arff"
    train, test = data_dir / f"{name}-train.arff", data_dir / f"{name}-test.arff"
    if train.exists() and test.exists():
        a, b = load_dataset(train, None, num_labels, name), load_dataset(test, None, num_labels, name)
        split = np.concatenate([np.full(a.num_samples, "train"), np.full(b.num_samples, "test")])
        return Dataset(name, np.vstack([a.features, b.features]), np.vstack([a.labels, b.labels]),
                       a.label_names, a.feature_names, split)
    if single.exists():
        return load_dataset(single, None, num_labels, name)
    return None


# splits and preprocessing ------------------------------------------------------------

def make_splits(ds: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0, index_files=None) -> Dataset:
    """Assign every sample to train/val/test, from index files if given, else by seeded ratios."""
    n = ds.num_samples
    split = np.empty(n, dtype="<U5")
    if index_files is not None:
        seen = np.zeros(n, dtype=bool)
        for which, path in zip(SPLITS, index_files):
            idx = np.loadtxt(path, dtype=np.int64, ndmin=1)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValidationError(f"{which} indices fall outside 0..{n - 1}")
            if seen[idx].any() or len(np.unique(idx)) != len(idx):
                raise ValidationError(f"{which} indices overlap another split")
            seen[idx] = True
            split[idx] = which
        if not seen.all():
            raise ValidationError(f"{int((~seen).sum())} samples are not covered by the index files")
        return replace(ds, split=split)
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.shape != (3,) or (ratios < 0).any() or abs(ratios.sum() - 1.0) > 1e-9:
        raise ValidationError(f"split ratios must be three nonnegative numbers summing to 1, got {ratios}")
    n_val, n_test = int(round(n * ratios[1])), int(round(n * ratios[2]))
    order = np.random.default_rng(seed).permutation(n)
    split[order] = "train"
    split[order[:n_val]] = "val"
    split[order[n_val:n_val + n_test]] = "test"
    return replace(ds, split=split)


def carve_validation(ds: Dataset, fraction: float = 0.1, seed: int = 0) -> Dataset:
    """Move a seeded ``fraction`` of the train rows into the validation split."""
    split = ds.split.copy()
    train = np.flatnonzero(split == "train")
    take = np.random.default_rng(seed).permutation(train)[:int(round(fraction * len(train)))]
    split[take] = "val"
    return replace(ds, split=split)


def write_split_files(ds: Dataset, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for which in SPLITS:
        path = directory / f"{which}_idx.txt"
        np.savetxt(path, np.flatnonzero(ds.split == which), fmt="%d")
        paths.append(path)
    return paths


def fit_standardizer(ds: Dataset) -> Standardizer:
    train = ds.features[ds.split == "train"]
    if train.shape[0] == 0:
        raise ValidationError("standardization needs a nonempty train split")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    binary = np.isin(train, (0.0, 1.0)).all(axis=0)
    scale = np.where(std < 1e-12, 1.0, std)
    return Standardizer(np.where(binary, 0.0, mean), np.where(binary, 1.0, scale))


def standardize(ds: Dataset) -> Dataset:
    """z-score real-valued columns with train-split statistics; 0/1 columns pass through."""
    transform = fit_standardizer(ds)
    return replace(ds, features=transform.apply(ds.features), transform=transform)


def label_stats(ds: Dataset | np.ndarray) -> LabelStats:
    y = ds.labels if isinstance(ds, Dataset) else np.asarray(ds)
    if y.shape[0] < 1:
        raise ValidationError("label statistics need at least one sample")
    per_sample = y.sum(axis=1).astype(np.float64)
    per_label = y.sum(axis=0).astype(np.float64)
    return LabelStats(
        float(per_sample.mean()), float(np.median(per_sample)), float(per_sample.max()),
        float(per_label.mean()), float(np.median(per_label)), float(per_label.max()),
    )
