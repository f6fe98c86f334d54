#!/usr/bin/env python3
"""Generate a synthetic ratings file (MovieLens line format) from a latent
factor model with item-popularity skew.  Handy for exercising the full
pipeline without the real datasets.
"""

import argparse

import numpy as np


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="output ratings file")
    parser.add_argument("--users", type=int, default=1200)
    parser.add_argument("--items", type=int, default=900)
    parser.add_argument("--latent-dim", type=int, default=8)
    parser.add_argument("--target-degree", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    u = rng.normal(size=(args.users, args.latent_dim))
    v = rng.normal(size=(args.items, args.latent_dim))
    affinity = u @ v.T / np.sqrt(args.latent_dim)
    logits = affinity + rng.normal(size=args.items)
    threshold = np.sort(logits.ravel())[-args.users * args.target_degree]
    probs = 1.0 / (1.0 + np.exp(-(logits - threshold)))
    mask = rng.random((args.users, args.items)) < probs * 0.5

    n = 0
    with open(args.out, "w") as fh:
        for uu, ii in zip(*np.nonzero(mask)):
            rating = int(np.clip(np.round(3 + affinity[uu, ii]), 1, 5))
            fh.write(f"{uu + 1}::{ii + 1}::{rating}::{int(uu) * 100000 + int(ii)}\n")
            n += 1
    print(f"wrote {n} ratings for {args.users} users x {args.items} items to {args.out}")


if __name__ == "__main__":
    main()
