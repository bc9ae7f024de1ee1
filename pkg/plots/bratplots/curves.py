"""Generic x-y curve plot for convergence and error-race tables.

Reads any CSV with a numeric x column, a numeric y column, and an
optional group column (one line per group value): fixed-point gap traces
and test-error-versus-ensemble-size races both render through this.
"""

import argparse
from collections import defaultdict

from .io_utils import fail, load_csv, new_figure, save

GROUP_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"]


def plot_curves(csv_path: str, out_path: str, x: str, y: str,
                group: str | None = None, logy: bool = False,
                title: str | None = None) -> None:
    required = [x, y] + ([group] if group else [])
    cols = load_csv(csv_path, required)
    fig = new_figure()
    ax = fig.add_subplot(111)
    if group:
        series = defaultdict(list)
        for i in range(len(cols[x])):
            series[cols[group][i]].append((float(cols[x][i]), float(cols[y][i])))
        for j, (name, pts) in enumerate(sorted(series.items())):
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    color=GROUP_COLORS[j % len(GROUP_COLORS)], lw=1.4, label=name)
        ax.legend(fontsize=8)
    else:
        pts = sorted(zip((float(v) for v in cols[x]), (float(v) for v in cols[y])))
        ax.plot([p[0] for p in pts], [p[1] for p in pts], color="#1f77b4", lw=1.4)
    if logy:
        positive = min(float(v) for v in cols[y]) > 0
        if not positive:
            fail("log scale requested but y has non-positive values")
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.set_title(title or f"{y} against {x}")
    save(fig, out_path)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--in", dest="csv_path", required=True, help="input CSV")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--x", required=True, help="x column name")
    p.add_argument("--y", required=True, help="y column name")
    p.add_argument("--group", default=None, help="optional group column")
    p.add_argument("--logy", action="store_true")
    p.add_argument("--title", default=None)
    args = p.parse_args(argv)
    plot_curves(args.csv_path, args.out, args.x, args.y, args.group, args.logy, args.title)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
