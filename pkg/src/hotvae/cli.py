"""Command-line entry point: ``hotvae {train,predict,evaluate,ablate-depth,ablate-graph,stats,grid}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as D
from .config import SUPPLEMENT_GRID, ConfigError, RunConfig, config_text, load_config
from .numerics import NonFiniteError, ShapeError
from .training import (
    TrainingDiverged, ablate_depth, ablate_graph, evaluate, load_checkpoint, predict, prepare_dataset,
    save_checkpoint, train, write_ablation_csv, write_loss_log,
)

EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED, EXIT_FAILED = 2, 3, 4, 5


def _add_config_flags(parser: argparse.ArgumentParser, skip=()) -> None:
    parser.add_argument("--config", help="key = value config file")
    group = parser.add_argument_group("config overrides")
    for f in dataclasses.fields(RunConfig):
        if f.name in skip:
            continue
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="VALUE")


def _config_from(args) -> RunConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return load_config(args.config, overrides)


def cmd_train(args) -> int:
    config = _config_from(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(config)
    save_checkpoint(result, out / "checkpoint")
    write_loss_log(result.log, out / "loss_log.csv")
    (out / "config.txt").write_text(config_text(config))
    report = evaluate(result.model, result.dataset, config.threshold_grid, inject=config.inject)
    (out / "metrics.csv").write_text(report.to_csv())
    print(f"best epoch {result.best_epoch}, validation maF1 {result.best_val_maf1:.4f}")
    print(report.to_table())
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if args.input.endswith(".npy"):
        features = np.load(args.input)
    else:
        num_labels = ckpt.model.shape.num_labels
        features = D.load_dataset(args.input, args.format or None, num_labels).features
    probs = predict(ckpt, features)
    names = ckpt.manifest.get("label_names") or [f"y{i}" for i in range(probs.shape[1])]
    lines = [",".join(names)] + [",".join(repr(float(v)) for v in row) for row in probs]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    config = ckpt.config
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if args.config or overrides:
        base = load_config(args.config) if args.config else config
        config = RunConfig.from_dict({**base.to_dict(), **overrides})
    if args.ecological and args.seed is None:
        raise ConfigError("--seed is required for the ecological metrics")
    ds = prepare_dataset(config)
    report = evaluate(ckpt.model, ds, config.threshold_grid, ecological=args.ecological,
                      seed=args.seed, inject=config.inject, split=args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(report.to_csv())
    print(report.to_table())
    return 0


def cmd_ablate_depth(args) -> int:
    config = _config_from(args)
    depths = [int(v) for v in args.depths.split(",")]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ablate_depth(config, depths, out_dir=out / "runs")
    write_ablation_csv(rows, out / "ablation_depth.csv", "n", "maF1")
    print((out / "ablation_depth.csv").read_text(), end="")
    return 0 if all(r.status == "ok" for r in rows) else EXIT_FAILED


def cmd_ablate_graph(args) -> int:
    config = _config_from(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ablate_graph(config, out_dir=out / "runs")
    write_ablation_csv(rows, out / "ablation_graph.csv", "graph", "medianAUC")
    print((out / "ablation_graph.csv").read_text(), end="")
    return 0 if all(r.status == "ok" for r in rows) else EXIT_FAILED


def cmd_stats(args) -> int:
    ds = D.load_dataset(args.dataset, args.format or None, args.num_labels)
    stats = D.label_stats(ds)
    print(json.dumps({"name": ds.name, "samples": ds.num_samples, "features": ds.num_features,
                      "labels": ds.num_labels, **stats.as_dict()}, indent=2))
    return 0


def cmd_grid(args) -> int:
    for key, values in SUPPLEMENT_GRID.items():
        print(f"{key} = {','.join(str(v) for v in values)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hotvae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint, loss_log.csv, metrics.csv")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label probabilities from the feature branch")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="CSV/ARFF dataset or .npy feature matrix")
    p.add_argument("--format", default="")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metrics.csv for a checkpoint")
    _add_config_flags(p, skip=("seed",))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=D.SPLITS)
    p.add_argument("--ecological", action="store_true", help="also run the 12 ecological metrics")
    p.add_argument("--seed", dest="seed", type=int, default=None, help="seed for sampling-based metrics")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate-depth", help="maF1 per decoder depth")
    _add_config_flags(p)
    p.add_argument("--depths", default="1,2,3,4,5")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate_depth)

    p = sub.add_parser("ablate-graph", help="medianAUC for prior vs complete label graphs")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate_graph)

    p = sub.add_parser("stats", help="label statistics of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", default="")
    p.add_argument("--num-labels", type=int, default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("grid", help="print the hyperparameter grid")
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ShapeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (D.ParseError, D.ValidationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, NonFiniteError) as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
