"""Interval bands over a 1-d signal.

Consumes an interval table (point_id, prediction, lower, upper, kind,
alpha, gamma) plus a truth table (point_id, x, f) and overlays one shaded
band per interval kind on the true curve.
"""

import argparse

from .io_utils import KIND_COLORS, fail, floats, load_csv, new_figure, save


def plot_intervals_1d(intervals_csv: str, truth_csv: str, out_path: str,
                      title: str = "Intervals on the 1-d signal") -> None:
    iv = load_csv(intervals_csv, ["point_id", "prediction", "lower", "upper", "kind"])
    tr = load_csv(truth_csv, ["point_id", "x", "f"])
    x_by_id = dict(zip(tr["point_id"], floats(tr["x"])))
    f_by_id = dict(zip(tr["point_id"], floats(tr["f"])))

    fig = new_figure()
    ax = fig.add_subplot(111)
    order = sorted(range(len(tr["point_id"])), key=lambda i: float(tr["x"][i]))
    xs = [float(tr["x"][i]) for i in order]
    fs = [float(tr["f"][i]) for i in order]
    ax.plot(xs, fs, color="black", lw=1.5, label="signal")

    kinds = sorted(set(iv["kind"]))
    for kind in kinds:
        rows = [i for i, k in enumerate(iv["kind"]) if k == kind]
        missing = [i for i in rows if iv["point_id"][i] not in x_by_id]
        if missing:
            fail(f"interval point_id {iv['point_id'][missing[0]]!r} not present in truth table")
        rows.sort(key=lambda i: x_by_id[iv["point_id"][i]])
        bx = [x_by_id[iv["point_id"][i]] for i in rows]
        lo = [float(iv["lower"][i]) for i in rows]
        hi = [float(iv["upper"][i]) for i in rows]
        color = KIND_COLORS.get(kind, "gray")
        ax.fill_between(bx, lo, hi, alpha=0.25, color=color, label=kind)
        if kind == kinds[0]:
            pred = [float(iv["prediction"][i]) for i in rows]
            ax.plot(bx, pred, color="dimgray", lw=1.0, ls="--", label="prediction")

    ax.set_xlabel("x")
    ax.set_ylabel("response")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    save(fig, out_path)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--intervals", required=True, help="interval CSV")
    p.add_argument("--truth", required=True, help="truth CSV with x and f columns")
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--title", default="Intervals on the 1-d signal")
    args = p.parse_args(argv)
    plot_intervals_1d(args.intervals, args.truth, args.out, args.title)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
