#!/usr/bin/env python3
"""Run the seeded user-subsample comparison (GNN vs BPR) on a ratings file.

Example:
    python scripts/compare_models.py data/ml-1m/ratings.dat --out runs/ml1m-cmp
"""

import argparse

from gnnrec.experiments import ComparisonSettings, compare_on_subsample, summarize
from gnnrec.graph_store import parse_amazon, parse_movielens


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("ratings", help="ratings file")
    parser.add_argument("--format", choices=("movielens", "amazon"), default="movielens")
    parser.add_argument("--out", default=None, help="directory for per-seed loss CSVs")
    parser.add_argument("--user-fraction", type=float, default=0.2)
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--d", type=int, default=32)
    parser.add_argument("--min-interactions", type=int, default=0)
    args = parser.parse_args()

    parse = parse_movielens if args.format == "movielens" else parse_amazon
    table = parse(args.ratings)
    if args.min_interactions:
        from gnnrec.graph_store import filter_min_interactions

        table = filter_min_interactions(table, args.min_interactions)
    settings = ComparisonSettings(
        user_fraction=args.user_fraction,
        seeds=tuple(int(s) for s in args.seeds.split(",")),
        epochs=args.epochs,
        d=args.d,
    )
    result = compare_on_subsample(table, settings, args.out, dataset=args.ratings)
    print(summarize(result))


if __name__ == "__main__":
    main()
