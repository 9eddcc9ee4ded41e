"""Write a seeded synthetic multi-label CSV, by default shaped like yeast (2417 x 103, 14 labels)."""

import argparse

from hotvae.data import label_stats, save_csv
from hotvae.synthetic import correlated_multilabel, yeast_like


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--samples", type=int, default=0, help="0 gives the yeast-shaped stand-in")
    parser.add_argument("--features", type=int, default=20)
    parser.add_argument("--labels", type=int, default=6)
    args = parser.parse_args()
    if args.samples:
        ds = correlated_multilabel(args.samples, args.features, args.labels, seed=args.seed)
    else:
        ds = yeast_like(args.seed)
    save_csv(ds, args.out)
    print(label_stats(ds.labels))


if __name__ == "__main__":
    main()
