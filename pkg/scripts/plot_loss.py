#!/usr/bin/env python3
"""Plot one or more training-loss CSVs (epoch,mean_loss,wall_time_s)."""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from gnnrec.trainer import read_loss_csv


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csvs", nargs="+", help="loss CSV files")
    parser.add_argument("--out", default="loss_curves.png")
    args = parser.parse_args()
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in args.csvs:
        records = read_loss_csv(path)
        ax.plot(
            [r.epoch for r in records],
            [r.mean_train_loss for r in records],
            marker="o",
            label=Path(path).stem,
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
