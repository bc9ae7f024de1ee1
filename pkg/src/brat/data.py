"""Dataset ingestion, deterministic splitting, and synthetic generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class Dataset:
    """Immutable feature matrix plus response vector.

    Features are expected to live in [0,1] per column (generators produce
    that range natively; `load_csv` rescales when asked to).
    """

    features: np.ndarray
    response: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.response, dtype=np.float64)
        if X.ndim != 2:
            raise DataError(f"features must be a 2-d matrix, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DataError(
                f"response length {y.shape} does not match feature rows {X.shape[0]}"
            )
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError("dataset needs at least one row and one column")
        if not np.isfinite(X).all():
            raise DataError("features contain non-finite entries")
        if not np.isfinite(y).all():
            raise DataError("response contains non-finite entries")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        if self.column_names is not None:
            names = tuple(self.column_names)
            if len(names) != X.shape[1]:
                raise DataError("column_names length does not match feature count")
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "Dataset":
        """Dataset restricted to the given row indices."""
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.response[idx], self.column_names)

    def restrict(self, cols) -> "Dataset":
        """Dataset restricted to the given feature columns."""
        cols = list(cols)
        names = None
        if self.column_names is not None:
            names = tuple(self.column_names[c] for c in cols)
        return Dataset(self.features[:, cols], self.response, names)


@dataclass(frozen=True)
class SplitSpec:
    """Train/calibration/test fractions plus the shuffle seed."""

    train_fraction: float
    calib_fraction: float
    test_fraction: float
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.calib_fraction, self.test_fraction)
        for name, f in zip(("train_fraction", "calib_fraction", "test_fraction"), fracs):
            if not 0.0 < f < 1.0:
                raise ConfigError(f"{name} must lie in (0,1), got {f}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fracs)}")


def load_csv(path: str, target: str, scale: bool = True) -> Dataset:
    """Load a headered, comma-separated numeric file into a Dataset.

    The `target` column becomes the response. With `scale` on, every
    feature column is min-max scaled to [0,1]; constant columns map to 0.5.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open data file {path!r}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"data file {path!r} is empty") from None
        header = [h.strip() for h in header]
        if target not in header:
            raise DataError(f"target column {target!r} not found in {path!r}")
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {i} of {path!r} has {len(row)} cells, expected {len(header)}")
            vals = []
            for name, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"non-numeric value {cell.strip()!r} at row {i}, column {name!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"data file {path!r} has no data rows")
    table = np.asarray(rows, dtype=np.float64)
    tcol = header.index(target)
    y = table[:, tcol]
    X = np.delete(table, tcol, axis=1)
    names = tuple(h for h in header if h != target)
    if scale:
        X = minmax_scale(X)
    return Dataset(X, y, names)


def minmax_scale(X: np.ndarray) -> np.ndarray:
    """Min-max scale each column to [0,1]; constant columns become 0.5."""
    X = np.asarray(X, dtype=np.float64)
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    span = hi - lo
    const = span == 0
    span = np.where(const, 1.0, span)
    out = (X - lo) / span
    out[:, const] = 0.5
    return out


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic disjoint train/calib/test partition.

    Calibration and test sizes are round(fraction * n); the remainder goes
    to train. Raises if any part would be empty.
    """
    n = ds.n
    if n < 3:
        raise DataError(f"need at least 3 rows to split, got {n}")
    n_calib = round(spec.calib_fraction * n)
    n_test = round(spec.test_fraction * n)
    n_train = n - n_calib - n_test
    if min(n_train, n_calib, n_test) < 1:
        raise DataError(
            f"split of {n} rows leaves an empty part "
            f"(train={n_train}, calib={n_calib}, test={n_test})"
        )
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    tr = np.sort(perm[:n_train])
    ca = np.sort(perm[n_train:n_train + n_calib])
    te = np.sort(perm[n_train + n_calib:])
    return ds.take(tr), ds.take(ca), ds.take(te)


# Mean functions for the synthetic generators, exposed so tests and
# scenario harnesses can evaluate the noiseless signal.

def sine_quadratic_mean(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sin(2.0 * np.pi * x) + 0.5 * x ** 2


def friedman_mean(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.5) ** 2
        + 5.0 * X[:, 4]
        - 10.0
    )


def vi_mean_full(X: np.ndarray, w: float) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return 4.0 * X[:, 0] - X[:, 1] ** 2 + w * X[:, 2]


def vi_mean_reduced(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return 4.0 * X[:, 0] - X[:, 1] ** 2


def _check_gen_args(n: int, sigma: float) -> None:
    if n < 1:
        raise ConfigError(f"generator needs n >= 1, got {n}")
    if sigma < 0:
        raise ConfigError(f"noise sd must be >= 0, got {sigma}")


def gen_sine_quadratic(n: int, sigma: float, seed: int) -> Dataset:
    """1-d signal sin(2*pi*x) + x^2/2 with Gaussian noise, x ~ U[0,1]."""
    _check_gen_args(n, sigma)
    rng = np.random.default_rng(seed)
    x = rng.random((n, 1))
    y = sine_quadratic_mean(x[:, 0]) + sigma * rng.standard_normal(n)
    return Dataset(x, y, ("x",))


def gen_friedman(n: int, sigma: float, seed: int) -> Dataset:
    """5-d benchmark surface with one inert feature, x ~ U[0,1]^5."""
    _check_gen_args(n, sigma)
    rng = np.random.default_rng(seed)
    X = rng.random((n, 5))
    y = friedman_mean(X) + sigma * rng.standard_normal(n)
    return Dataset(X, y, ("x1", "x2", "x3", "x4", "x5"))


def gen_vi(n: int, sigma: float, w: float, seed: int) -> tuple[Dataset, Dataset]:
    """Variable-importance pair: a 3-feature dataset whose third feature
    carries signal strength w, and its 2-feature null counterpart.

    Both share the same draws of x and noise, so at w=0 the responses
    coincide pointwise.
    """
    _check_gen_args(n, sigma)
    if w < 0:
        raise ConfigError(f"signal strength w must be >= 0, got {w}")
    rng = np.random.default_rng(seed)
    X = rng.random((n, 3))
    eps = sigma * rng.standard_normal(n)
    full = Dataset(X, vi_mean_full(X, w) + eps, ("x1", "x2", "x3"))
    reduced = Dataset(X[:, :2], vi_mean_reduced(X) + eps, ("x1", "x2"))
    return full, reduced
