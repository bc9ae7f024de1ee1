"""Shared CSV loading with schema checks and deterministic figure saving."""

import csv
import sys

import matplotlib.pyplot as plt

DPI = 120

KIND_COLORS = {"ci": "#1f77b4", "pi": "#ff7f0e", "ri": "#2ca02c"}


def fail(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)
    raise SystemExit(2)


def load_csv(path: str, required: list[str]) -> dict[str, list[str]]:
    """Read a headered CSV into columns, failing on missing columns or an
    empty body."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        fail(f"cannot open {path!r}: {exc}")
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            fail(f"{path!r} is empty")
        missing = [c for c in required if c not in header]
        if missing:
            fail(f"{path!r} lacks required columns {missing}; has {header}")
        rows = [r for r in reader if r]
    if not rows:
        fail(f"{path!r} has no data rows")
    cols = {name: [] for name in header}
    for r in rows:
        for name, cell in zip(header, r):
            cols[name].append(cell)
    return cols


def floats(col: list[str]) -> list[float]:
    return [float(v) for v in col]


def new_figure(width=8.0, height=5.0):
    return plt.figure(figsize=(width, height), dpi=DPI)


def save(fig, out_path: str) -> None:
    # fixed dpi, no bbox trimming, no metadata beyond the library default:
    # identical inputs give identical bytes
    fig.savefig(out_path, dpi=DPI)
    plt.close(fig)
