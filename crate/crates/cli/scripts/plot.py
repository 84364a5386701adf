#!/usr/bin/env python3
"""Plot `spf field` and `spf run` output for 2D worlds.

usage: plot.py FIELD_DIR [RUN_DIR] [-o figure.png]
"""
import argparse
import csv
import glob
import os

import matplotlib.pyplot as plt


def read_rows(path):
    with open(path) as f:
        reader = csv.DictReader(f)
        return [{k: float(v) if k != "closed" else v for k, v in row.items()} for row in reader]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("field_dir")
    ap.add_argument("run_dir", nargs="?")
    ap.add_argument("-o", "--output", default="field.png")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(8, 6))
    field = read_rows(os.path.join(args.field_dir, "field.csv"))
    step = max(1, len(field) // 1500)
    sub = field[::step]
    ax.quiver([r["x0"] for r in sub], [r["x1"] for r in sub],
              [r["v0"] for r in sub], [r["v1"] for r in sub],
              [r["w"] for r in sub], cmap="viridis", angles="xy", width=0.002)

    lines = {}
    for r in read_rows(os.path.join(args.field_dir, "contours.csv")):
        lines.setdefault((r["level"], r["polyline"]), []).append((r["x0"], r["x1"]))
    for (level, _), pts in lines.items():
        xs, ys = zip(*pts)
        ax.plot(xs, ys, "k-" if level == 0 else "k--", lw=1)

    if args.run_dir:
        for path in sorted(glob.glob(os.path.join(args.run_dir, "traj_*.csv"))):
            rows = read_rows(path)
            ax.plot([r["x0"] for r in rows], [r["x1"] for r in rows], lw=1.2)

    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)


if __name__ == "__main__":
    main()
