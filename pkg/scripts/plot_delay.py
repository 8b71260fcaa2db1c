#!/usr/bin/env python3
"""Plot mean delay against load from plotdata_*.dat files (one line per policy).

    python3 scripts/plot_delay.py out/herd --out herd.png
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_dat(path: Path):
    with open(path) as f:
        meta = dict(kv.split("=", 1) for kv in f.readline().lstrip("# ").split())
    return meta, np.atleast_2d(np.loadtxt(path))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("directory", type=Path)
    ap.add_argument("--out", type=Path, default=Path("delay.png"))
    ap.add_argument("--x", choices=("load", "epsilon"), default="load")
    ap.add_argument("--logy", action="store_true")
    args = ap.parse_args()

    files = sorted(args.directory.glob("plotdata_*.dat"))
    if not files:
        raise SystemExit(f"no plotdata_*.dat in {args.directory}")
    col = 0 if args.x == "load" else 1
    fig, ax = plt.subplots(figsize=(6, 4))
    for p in files:
        meta, d = read_dat(p)
        y, lo, hi = d[:, 2], d[:, 3], d[:, 4]
        ax.errorbar(d[:, col], y, yerr=[y - lo, hi - y], marker="o", capsize=3,
                    label=f"{meta['policy']} ({meta['experiment']})")
    ax.set_xlabel(args.x)
    ax.set_ylabel("mean delay (slots)")
    if args.logy:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
