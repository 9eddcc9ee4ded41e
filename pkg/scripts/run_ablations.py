"""Decoder-depth and label-graph ablations on a dataset file, written as two CSV tables."""

import argparse
from pathlib import Path

from hotvae.config import RunConfig
from hotvae.training import ablate_depth, ablate_graph, prepare_dataset, write_ablation_csv


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("dataset")
    parser.add_argument("--out", default="runs/ablations")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    config = RunConfig(dataset=args.dataset, epochs=args.epochs, seed=args.seed)
    ds = prepare_dataset(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    depth = ablate_depth(config, dataset=ds, out_dir=out / "depth")
    write_ablation_csv(depth, out / "ablation_depth.csv", "n", "maF1")
    graph = ablate_graph(config, dataset=ds, out_dir=out / "graph")
    write_ablation_csv(graph, out / "ablation_graph.csv", "graph", "medianAUC")
    for row in depth + graph:
        print(f"{row.key:>8}  {row.value:.4f}  {row.status}")


if __name__ == "__main__":
    main()
