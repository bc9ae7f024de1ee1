"""Size and power of the variable-importance test.

Consumes the test table (w, n, rep, ..., reject) and plots the rejection
rate against training size, one line per signal strength: the w=0 line
reads as the empirical size, the others as power.
"""

import argparse
from collections import defaultdict

import numpy as np

from .io_utils import load_csv, new_figure, save

W_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]


def plot_vi_curves(vi_csv: str, out_path: str, alpha: float = 0.05,
                   title: str = "Variable-importance test: size and power") -> None:
    cols = load_csv(vi_csv, ["w", "n", "rep", "reject"])
    cells = defaultdict(list)
    for i in range(len(cols["w"])):
        cells[(float(cols["w"][i]), int(float(cols["n"][i])))].append(int(float(cols["reject"][i])))
    ws = sorted({w for w, _ in cells})
    fig = new_figure(6.5, 4.5)
    ax = fig.add_subplot(111)
    for j, w in enumerate(ws):
        ns = sorted(n for ww, n in cells if ww == w)
        rates = [float(np.mean(cells[(w, n)])) for n in ns]
        label = f"w={w:g}" + (" (size)" if w == 0 else " (power)")
        ax.plot(ns, rates, marker="o", color=W_COLORS[j % len(W_COLORS)], label=label)
    ax.axhline(alpha, color="gray", lw=1.0, ls="--", label=f"nominal {alpha:g}")
    ax.set_xlabel("training size n")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(title)
    ax.legend(fontsize=8)
    save(fig, out_path)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--in", dest="vi_csv", required=True, help="test results CSV")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--title", default="Variable-importance test: size and power")
    args = p.parse_args(argv)
    plot_vi_curves(args.vi_csv, args.out, args.alpha, args.title)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
