#!/usr/bin/env python3
"""Plot the CSV outputs of the coxsgd tool.

usage: plot.py RESULT_DIR [--out FIG_DIR]

Looks for pop_gradient.csv, scaling_rule.csv, summary.csv and trajectory.csv
in RESULT_DIR and writes one PNG per file found.
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def read(path):
    return pd.read_csv(path, comment="#")


def pop_gradient(df, ax):
    for s, g in df.groupby("s"):
        ax.errorbar(g["theta"], g["grad_mean"], yerr=2 * g["grad_se"], label=f"s={s}", capsize=2)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("theta")
    ax.set_ylabel("E[grad L^(s)]")
    ax.legend(fontsize="small")


def scaling_rule(df, axes):
    for ax, mode in zip(axes, ["scaled", "fixed"]):
        sub = df[df["mode"] == mode]
        for s, g in sub.groupby("s"):
            mean = g.groupby("epoch")["test_loss"].mean()
            ax.plot(mean.index, mean.values, label=f"s={s}")
        ax.set_title(f"{mode} learning rate")
        ax.set_xlabel("epoch")
        ax.set_ylabel("test loss")
        ax.legend(fontsize="small")


def efficiency(df, ax):
    for method, g in df.groupby("method"):
        ax.plot(g["s"], g["median"], marker="o", label=method)
        ax.fill_between(g["s"], g["q1"], g["q3"], alpha=0.2)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("batch size s")
    ax.set_ylabel("log ||theta_hat - theta0||^2")
    ax.legend()


def trajectory(df, ax):
    cols = [c for c in df.columns if c.startswith("theta_")]
    for rep, g in df.groupby("replication"):
        for c in cols:
            ax.plot(g["t"], g[c], lw=0.8, label=f"{c} rep {rep}" if len(cols) * df["replication"].nunique() <= 8 else None)
    ax.set_xlabel("iteration t")
    ax.set_ylabel("parameter")
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize="small")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("results", type=Path)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    out = args.out or args.results
    out.mkdir(parents=True, exist_ok=True)

    plots = {
        "pop_gradient.csv": (1, pop_gradient),
        "scaling_rule.csv": (2, scaling_rule),
        "summary.csv": (1, efficiency),
        "trajectory.csv": (1, trajectory),
    }
    for name, (ncols, fn) in plots.items():
        path = args.results / name
        if not path.exists():
            continue
        fig, axes = plt.subplots(1, ncols, figsize=(5 * ncols, 4), squeeze=False)
        fn(read(path), axes[0] if ncols > 1 else axes[0][0])
        fig.tight_layout()
        fig.savefig(out / (path.stem + ".png"), dpi=120)
        plt.close(fig)
        print(f"wrote {out / (path.stem + '.png')}")


if __name__ == "__main__":
    main()
