"""Run configuration: dataclass defaults, ``key = value`` files and ``--key value`` overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .losses import LossWeights
from .metrics import DEFAULT_GRID
from .model import ModelShape, default_heads

# hyperparameter sets searched for the reported results
SUPPLEMENT_GRID = {
    "lr": (2e-4, 3e-4, 7.5e-4),
    "lambda0": (1.0,),
    "lambda1": (0.1, 0.2, 0.3),
    "lambda2": (1.0, 100.0, 1000.0),
    "beta": (1e-5, 1e-4, 0.0),
    "d": (100, 200, 512),
    "n_layers": (2, 3, 4, 5),
    "dropout": (0.0, 0.1, 0.2, 0.5),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dataset: str = ""
    format: str = ""
    num_labels: int = 0
    encoder: str = "mlp"
    d: int = 100
    n_layers: int = 2
    heads: int = 0  # 0 picks 4 heads, or 2 when d < 64
    hidden: tuple[int, int] = (256, 512)
    lr: float = 7.5e-4
    lambda0: float = 1.0
    lambda1: float = 0.1
    lambda2: float = 1.0
    beta: float = 1e-4
    dropout: float = 0.1
    epochs: int = 200
    batch_size: int = 128
    seed: int = 0
    graph_mode: str = "complete"
    inject: str = "per-layer"
    threshold_grid: tuple[float, ...] = DEFAULT_GRID
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_files: tuple[str, ...] = field(default_factory=tuple)
    val_fraction: float = 0.1
    standardize: bool = True

    def __post_init__(self):
        self.validate()

    @property
    def n_heads(self) -> int:
        return self.heads or default_heads(self.d)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda0, self.lambda1, self.lambda2, self.beta)

    def model_shape(self, input_dim: int, num_labels: int) -> ModelShape:
        return ModelShape(input_dim, num_labels, self.d, self.n_layers, self.n_heads, tuple(self.hidden))

    def validate(self) -> None:
        if self.encoder != "mlp":
            raise ConfigError(f"only the mlp encoder is available, got {self.encoder!r}")
        if self.d < 1 or self.d % self.n_heads:
            raise ConfigError(f"d={self.d} must be divisible by heads={self.n_heads}")
        if self.n_layers < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("n_layers, epochs and batch_size must be at least 1")
        if min(self.lr, self.lambda0, self.lambda1, self.lambda2, self.beta, self.dropout) < 0:
            raise ConfigError("rates and loss weights must be nonnegative")
        if not self.dropout < 1:
            raise ConfigError("dropout must be below 1")
        if self.graph_mode not in ("complete", "prior"):
            raise ConfigError(f"graph_mode must be complete or prior, got {self.graph_mode!r}")
        if self.inject not in ("per-layer", "first"):
            raise ConfigError(f"inject must be per-layer or first, got {self.inject!r}")
        if self.split_files and len(self.split_files) != 3:
            raise ConfigError("split_files needs train, val and test index files")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(values) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(known[k], v) for k, v in values.items()})


def _plain(value):
    return list(value) if isinstance(value, tuple) else value


def _coerce(f: dataclasses.Field, value):
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    if not isinstance(value, str):
        return tuple(value) if isinstance(default, tuple) else value
    text = value.strip()
    try:
        if isinstance(default, bool):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [s.strip() for s in text.split(",") if s.strip()]
            if f.name == "split_files":
                return tuple(items)
            kind = int if f.name == "hidden" else float
            return tuple(kind(s) for s in items)
    except ValueError:
        raise ConfigError(f"bad value for {f.name}: {value!r}") from None
    return text


def parse_config_text(text: str) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k.replace("-", "_"): v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_dict(values)


def config_text(config: RunConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
