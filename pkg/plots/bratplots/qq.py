"""Normal Q-Q plot of standardized errors.

Consumes the normality table (rep, std_error) and plots empirical
quantiles against standard-normal quantiles with the identity line.
"""

import argparse

import numpy as np
from scipy import special

from .io_utils import floats, load_csv, new_figure, save


def plot_qq(normality_csv: str, out_path: str,
            title: str = "Standardized prediction errors") -> None:
    cols = load_csv(normality_csv, ["rep", "std_error"])
    z = np.sort(np.asarray(floats(cols["std_error"])))
    n = z.shape[0]
    probs = (np.arange(1, n + 1) - 0.5) / n
    theo = special.ndtri(probs)

    fig = new_figure(5.5, 5.5)
    ax = fig.add_subplot(111)
    lim = max(3.0, float(np.abs(theo).max()), float(np.abs(z).max()))
    ax.plot([-lim, lim], [-lim, lim], color="gray", lw=1.0)
    ax.scatter(theo, z, s=10, color="#1f77b4", alpha=0.8, linewidths=0)
    ax.set_xlabel("standard normal quantiles")
    ax.set_ylabel("empirical quantiles")
    ax.set_title(title)
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    save(fig, out_path)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--normality", required=True, help="normality CSV")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--title", default="Standardized prediction errors")
    args = p.parse_args(argv)
    plot_qq(args.normality, args.out, args.title)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
