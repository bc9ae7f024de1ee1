"""Raincloud panels of interval coverage and width.

Consumes the coverage table (rep, point_id, kind, covered, width, ...).
Four rows of panels: per-model (marginal) coverage and width, then
per-point (conditional) coverage and width; each row groups the interval
kinds side by side with a density silhouette, jittered points, and a box.
"""

import argparse
from collections import defaultdict

import numpy as np
from scipy import stats as sstats

from .io_utils import KIND_COLORS, floats, load_csv, new_figure, save


def _cloud(ax, values, pos, color):
    values = np.asarray(values, dtype=float)
    rng = np.random.default_rng(0)
    jitter = rng.uniform(-0.06, 0.06, size=values.shape[0])
    ax.scatter(values, pos + jitter - 0.18, s=6, color=color, alpha=0.6, linewidths=0)
    spread = values.max() - values.min()
    if spread > 0:
        try:
            kde = sstats.gaussian_kde(values)
            grid = np.linspace(values.min(), values.max(), 120)
            dens = kde(grid)
            dens = 0.32 * dens / dens.max()
            ax.fill_between(grid, pos + 0.02, pos + 0.02 + dens, color=color, alpha=0.4)
        except np.linalg.LinAlgError:
            spread = 0.0
    if spread == 0:
        ax.plot([values[0], values[0]], [pos + 0.02, pos + 0.3], color=color, alpha=0.6)
    try:
        ax.boxplot([values], positions=[pos], orientation="horizontal", widths=0.12,
                   showfliers=False, medianprops={"color": "black"})
    except TypeError:
        ax.boxplot([values], positions=[pos], vert=False, widths=0.12,
                   showfliers=False, medianprops={"color": "black"})


def _aggregate(cols, by):
    groups = defaultdict(lambda: defaultdict(list))
    covered = floats(cols["covered"])
    width = floats(cols["width"])
    for i, kind in enumerate(cols["kind"]):
        key = cols[by][i]
        groups[kind][key].append((covered[i], width[i]))
    cov_out, wid_out = {}, {}
    for kind, sub in groups.items():
        cov_out[kind] = [float(np.mean([c for c, _ in v])) for v in sub.values()]
        wid_out[kind] = [float(np.mean([w for _, w in v])) for v in sub.values()]
    return cov_out, wid_out


def plot_raincloud(coverage_csv: str, out_path: str,
                   title: str = "Interval coverage and width") -> None:
    cols = load_csv(coverage_csv, ["rep", "point_id", "kind", "covered", "width"])
    marg_cov, marg_wid = _aggregate(cols, "rep")
    cond_cov, cond_wid = _aggregate(cols, "point_id")
    kinds = sorted(marg_cov)

    panels = [
        ("marginal coverage", marg_cov),
        ("marginal width", marg_wid),
        ("conditional coverage", cond_cov),
        ("conditional width", cond_wid),
    ]
    fig = new_figure(8.0, 10.0)
    for row, (label, data) in enumerate(panels):
        ax = fig.add_subplot(4, 1, row + 1)
        for j, kind in enumerate(kinds):
            _cloud(ax, data[kind], pos=float(j), color=KIND_COLORS.get(kind, "gray"))
        ax.set_yticks(range(len(kinds)))
        ax.set_yticklabels(kinds)
        ax.set_ylim(-0.6, len(kinds) - 0.4)
        ax.set_title(label, fontsize=9)
        if "coverage" in label:
            ax.set_xlim(-0.02, 1.02)
    fig.suptitle(title)
    fig.tight_layout(rect=(0, 0, 1, 0.97))
    save(fig, out_path)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--coverage", required=True, help="coverage CSV")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--title", default="Interval coverage and width")
    args = p.parse_args(argv)
    plot_raincloud(args.coverage, args.out, args.title)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
