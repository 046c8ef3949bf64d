"""Plot the CSV files written by `llqfp exp1`, `exp2`, `exp3` and `sweep`.

Usage: python docs/plot_experiments.py OUT_DIR
"""

import sys
from pathlib import Path

import matplotlib.pyplot as plt
import pandas as pd


def read(path):
    return pd.read_csv(path, comment="#")


def main(out):
    out = Path(out)
    if (out / "exp1.csv").exists():
        df = read(out / "exp1.csv")
        fig, ax = plt.subplots()
        for label, g in df.groupby("config", sort=False):
            ax.scatter(g["seed"], g["distance"], s=6, label=f"{label} distance")
            ax.plot(g["seed"], g["gamma_realized"], lw=0.6, label=f"{label} gamma")
        ax.set_xlabel("seed")
        ax.legend()
        fig.savefig(out / "exp1.png", dpi=150)
    if (out / "exp2_histogram.csv").exists():
        df = read(out / "exp2_histogram.csv")
        g = df[df["player"] == 1]
        fig, ax = plt.subplots()
        for label, h in g.groupby("config", sort=False):
            ax.bar(h["bin_lo"], h["count"], width=h["bin_hi"] - h["bin_lo"], align="edge", alpha=0.5, label=label)
        ax.set_xlabel("perturbed equilibrium action, player 1")
        ax.legend()
        fig.savefig(out / "exp2.png", dpi=150)
    if (out / "exp3.csv").exists():
        df = read(out / "exp3.csv").set_index("player")
        df.plot.bar().figure.savefig(out / "exp3.png", dpi=150)
    if (out / "sweep.csv").exists():
        df = read(out / "sweep.csv")
        fig, ax = plt.subplots()
        ax.plot(df["epsilon"], df["mean_relative_distance"], marker="o")
        ax.set_xlabel("epsilon")
        ax.set_ylabel("mean relative distance")
        fig.savefig(out / "sweep.png", dpi=150)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else ".")
