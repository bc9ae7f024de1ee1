"""Training loops: dropout boosting, parallel boosting, and the plain
regularized variant, all built on the same averaged update.

Every round's tree enters the ensemble through a running average, so the
raw predictor is lambda * (mean of tree predictions) for the sequential
algorithms and the per-round tree sum averaged over rounds for the
parallel one. The averaged update forces a fixed point, which is what the
kernel and inference modules exploit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataError, NumericalError
from .trees import RegressionTree, TreeParams, clone_structure_refit, fit_tree, resolve_min_leaf

ALGOS = ("brat_d", "brat_p", "boulevard")


def truncate(v, M):
    """Hard clamp sign(v) * min(M, |v|), elementwise."""
    if not M > 0:
        raise ConfigError(f"truncation bound must be positive, got {M}")
    v = np.asarray(v, dtype=np.float64)
    out = np.sign(v) * np.minimum(M, np.abs(v))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BoostParams:
    """Hyperparameters shared by all three training loops.

    dropout_p is the per-tree exclusion probability when building
    residuals (q = 1 - dropout_p is the keep probability); subsample_xi
    is the per-row inclusion probability for each tree's fitting sample.
    truncation_M caps the partial-ensemble prediction inside residuals
    ("auto" = twice the largest |y|, "off" disables). freeze_after = B0
    stops growing fresh structures after round B0 and recycles earlier
    ones with refit leaf values.
    """

    algo: str
    lam: float = 0.8
    dropout_p: float = 0.0
    subsample_xi: float = 1.0
    rounds_B: int = 100
    trees_per_round_K: int = 1
    truncation_M: float | str = "auto"
    freeze_after: int | str = "off"
    tree: TreeParams = field(default_factory=TreeParams)
    seed: int = 0

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"algo must be one of {ALGOS}, got {self.algo!r}")
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in (0,1], got {self.lam}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must lie in [0,1), got {self.dropout_p}")
        if self.algo == "boulevard" and self.dropout_p != 0.0:
            raise ConfigError("boulevard requires dropout_p = 0")
        if not 0.0 < self.subsample_xi <= 1.0:
            raise ConfigError(f"subsample_xi must lie in (0,1], got {self.subsample_xi}")
        if not isinstance(self.rounds_B, int) or self.rounds_B < 2:
            raise ConfigError(f"rounds_B must be an integer >= 2, got {self.rounds_B}")
        if not isinstance(self.trees_per_round_K, int) or self.trees_per_round_K < 1:
            raise ConfigError(f"trees_per_round_K must be an integer >= 1, got {self.trees_per_round_K}")
        if self.truncation_M not in ("auto", "off"):
            if not isinstance(self.truncation_M, (int, float)) or not self.truncation_M > 0:
                raise ConfigError(f"truncation_M must be 'auto', 'off' or > 0, got {self.truncation_M}")
        if self.freeze_after != "off":
            if not isinstance(self.freeze_after, int) or self.freeze_after < 1:
                raise ConfigError(f"freeze_after must be 'off' or an integer >= 1, got {self.freeze_after}")

    @property
    def q(self) -> float:
        return 1.0 - self.dropout_p

    def resolve_truncation(self, y: np.ndarray) -> float:
        if self.truncation_M == "off":
            return np.inf
        if self.truncation_M == "auto":
            return max(2.0 * float(np.abs(y).max()), 1e-12)
        return float(self.truncation_M)

    def to_dict(self) -> dict:
        return {
            "algo": self.algo,
            "lambda": self.lam,
            "dropout_p": self.dropout_p,
            "subsample_xi": self.subsample_xi,
            "rounds_B": self.rounds_B,
            "trees_per_round_K": self.trees_per_round_K,
            "truncation_M": self.truncation_M,
            "freeze_after": self.freeze_after,
            "tree": self.tree.to_dict(),
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "BoostParams":
        return BoostParams(
            algo=d["algo"],
            lam=d["lambda"],
            dropout_p=d["dropout_p"],
            subsample_xi=d["subsample_xi"],
            rounds_B=d["rounds_B"],
            trees_per_round_K=d["trees_per_round_K"],
            truncation_M=d["truncation_M"],
            freeze_after=d["freeze_after"],
            tree=TreeParams.from_dict(d["tree"]),
            seed=d["seed"],
        )


def rescale_constant(algo: str, lam: float, q: float) -> float:
    """Factor restoring full-signal predictions from the shrunken average."""
    if algo == "brat_d":
        return (1.0 + lam * q) / lam
    if algo == "boulevard":
        return (1.0 + lam) / lam
    return 1.0


@dataclass
class BratModel:
    """Trained ensemble: ordered trees for the sequential algorithms, a
    rounds x K grid for the parallel one."""

    algo: str
    trees: list
    params: BoostParams
    rescale: float
    train_n: int

    def iter_trees(self):
        if self.algo == "brat_p":
            for row in self.trees:
                yield from row
        else:
            yield from self.trees

    @property
    def n_trees(self) -> int:
        if self.algo == "brat_p":
            return sum(len(row) for row in self.trees)
        return len(self.trees)

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    def predict(self, X: np.ndarray, rescaled: bool = False) -> np.ndarray:
        """Averaged ensemble prediction; multiplied by the rescale constant
        when `rescaled` is on."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.zeros(X.shape[0], dtype=np.float64)
        if self.n_rounds == 0:
            return out
        for tree in self.iter_trees():
            out += tree.predict(X)
        if self.algo == "brat_p":
            out /= self.n_rounds
        else:
            out *= self.params.lam / self.n_rounds
        if rescaled:
            out = out * self.rescale
        return out

    def to_dict(self) -> dict:
        if self.algo == "brat_p":
            trees = [[t.to_dict() for t in row] for row in self.trees]
        else:
            trees = [t.to_dict() for t in self.trees]
        return {
            "algo": self.algo,
            "params": self.params.to_dict(),
            "rescale": self.rescale,
            "train_n": self.train_n,
            "trees": trees,
        }

    @staticmethod
    def from_dict(d: dict) -> "BratModel":
        algo = d["algo"]
        if algo == "brat_p":
            trees = [[RegressionTree.from_dict(t) for t in row] for row in d["trees"]]
        else:
            trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        return BratModel(
            algo=algo,
            trees=trees,
            params=BoostParams.from_dict(d["params"]),
            rescale=d["rescale"],
            train_n=d["train_n"],
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def load(path: str) -> "BratModel":
        with open(path, "r", encoding="utf-8") as fh:
            return BratModel.from_dict(json.load(fh))


def _check_trainable(ds: Dataset, params: BoostParams) -> None:
    min_leaf = resolve_min_leaf(params.tree.min_leaf, ds.n, ds.d)
    if ds.n < min_leaf:
        raise DataError(f"degenerate dataset: n={ds.n} is below min_leaf={min_leaf}")


def _draw_rows(rng: np.random.Generator, n: int, xi: float) -> np.ndarray:
    # An empty draw is redrawn, not skipped: a tree is built every round.
    mask = rng.random(n) < xi
    while not mask.any():
        mask = rng.random(n) < xi
    return mask


def train_brat_d(train: Dataset, params: BoostParams, round_callback=None) -> BratModel:
    """Dropout training loop (the plain variant is the dropout_p=0 case).

    Round b draws a Bernoulli(q) subset of the previous trees (the zero
    initial tree included, so the draw count is always b), computes
    residuals against the truncated partial-ensemble average, and fits on
    a Bernoulli(xi) row subsample. After `freeze_after` rounds, tree
    structures are recycled uniformly from the warm-up pool with leaf
    values refit on the current residuals.

    `round_callback(b, yhat)` receives the raw training predictions after
    each round.
    """
    if params.algo not in ("brat_d", "boulevard"):
        raise ConfigError(f"train_brat_d cannot train algo {params.algo!r}")
    _check_trainable(train, params)
    y = train.response
    n = train.n
    B = params.rounds_B
    lam = params.lam
    q = params.q
    M = params.resolve_truncation(y)
    freeze = None if params.freeze_after == "off" else int(params.freeze_after)
    rng = np.random.default_rng(params.seed)

    trees: list[RegressionTree] = []
    preds = np.zeros((B - 1, n), dtype=np.float32)
    run_mean = np.zeros(n, dtype=np.float64)

    for b in range(1, B):
        keep = rng.random(b) < q          # index 0 is the zero tree
        rows = _draw_rows(rng, n, params.subsample_xi)
        partial = (lam / b) * (keep[1:].astype(np.float32) @ preds[:b - 1])
        z = y - truncate(partial.astype(np.float64), M)
        if freeze is not None and b > freeze:
            src = trees[int(rng.integers(0, freeze))]
            tree = clone_structure_refit(src, train, z, rows)
        else:
            tree = fit_tree(train, z, rows, params.tree)
        trees.append(tree)
        p64 = tree.train_predictions()
        preds[b - 1] = p64
        run_mean += (p64 - run_mean) / b
        if round_callback is not None:
            round_callback(b, lam * run_mean)

    return BratModel(
        algo=params.algo,
        trees=trees,
        params=params,
        rescale=rescale_constant(params.algo, lam, q),
        train_n=n,
    )


def _column_order(K: int):
    # Seam for the round-order-independence test; residuals for a round
    # are fixed before any of its trees is fit, so any order is valid.
    return range(K)


def train_brat_p(train: Dataset, params: BoostParams, round_callback=None) -> BratModel:
    """Parallel training loop: K trees per round on leave-one-column-out
    residuals.

    The first round is a warm start of K plain boosting steps at unit
    learning rate. From round 2 on, column k's residual subtracts every
    other column's truncated running average; within a round the K fits
    only read rounds < b, and each column owns an independent random
    stream, so the fit order is immaterial.
    """
    if params.algo != "brat_p":
        raise ConfigError(f"train_brat_p cannot train algo {params.algo!r}")
    _check_trainable(train, params)
    y = train.response
    n = train.n
    B = params.rounds_B
    K = params.trees_per_round_K
    M = params.resolve_truncation(y)
    freeze = None if params.freeze_after == "off" else int(params.freeze_after)
    col_rngs = [np.random.default_rng(ss) for ss in np.random.SeedSequence(params.seed).spawn(K)]

    col_sums = np.zeros((K, n), dtype=np.float64)   # per-column cumulative train predictions
    rounds: list[list[RegressionTree]] = []

    # Warm start: K sequential plain boosting steps fill round 1.
    warm: list[RegressionTree] = []
    for k in range(K):
        z = y - col_sums[:k].sum(axis=0)
        rows = _draw_rows(col_rngs[k], n, params.subsample_xi)
        tree = fit_tree(train, z, rows, params.tree)
        warm.append(tree)
        col_sums[k] = tree.train_predictions()
    rounds.append(warm)
    if round_callback is not None:
        round_callback(1, col_sums.sum(axis=0))

    for b in range(2, B):
        col_avg = col_sums / (b - 1)
        capped = np.sign(col_avg) * np.minimum(M, np.abs(col_avg))
        capped_total = capped.sum(axis=0)
        residuals = y[None, :] - (capped_total[None, :] - capped)
        if freeze is not None and b > freeze:
            pool = [t for row in rounds[:freeze] for t in row]
        else:
            pool = None
        row: list[RegressionTree | None] = [None] * K
        for k in _column_order(K):
            rows_k = _draw_rows(col_rngs[k], n, params.subsample_xi)
            if pool is not None:
                src = pool[int(col_rngs[k].integers(0, len(pool)))]
                tree = clone_structure_refit(src, train, residuals[k], rows_k)
            else:
                tree = fit_tree(train, residuals[k], rows_k, params.tree)
            row[k] = tree
            col_sums[k] += tree.train_predictions()
        rounds.append(row)
        if round_callback is not None:
            round_callback(b, col_sums.sum(axis=0) / b)

    return BratModel(
        algo="brat_p",
        trees=rounds,
        params=params,
        rescale=1.0,
        train_n=n,
    )


def train(train_ds: Dataset, params: BoostParams, round_callback=None) -> BratModel:
    """Dispatch to the right training loop for params.algo."""
    if params.algo == "brat_p":
        return train_brat_p(train_ds, params, round_callback)
    return train_brat_d(train_ds, params, round_callback)


def fixed_point_oracle(Kbar: np.ndarray, y: np.ndarray, algo: str,
                       lam: float | None = None, q: float | None = None,
                       K: int | None = None) -> np.ndarray:
    """Closed-form limit of the training predictions given the mean
    structure matrix; the independent oracle for convergence checks."""
    Kbar = np.asarray(Kbar, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = Kbar.shape[0]
    if Kbar.shape != (n, n) or y.shape != (n,):
        raise ConfigError(f"shape mismatch: Kbar {Kbar.shape}, y {y.shape}")
    if Kbar.min() < -1e-8 or Kbar.max() > 1.0 + 1e-8:
        raise ConfigError("mean structure matrix entries must lie in [0,1]")
    if Kbar.sum(axis=1).max() > 1.0 + 1e-8:
        raise ConfigError("mean structure matrix rows must sum to at most 1")
    if algo in ("brat_d", "boulevard"):
        if lam is None:
            raise ConfigError("lam is required for the sequential fixed point")
        if q is None:
            q = 1.0 if algo == "boulevard" else q
        if q is None:
            raise ConfigError("q is required for the dropout fixed point")
        A = np.eye(n) / lam + q * Kbar
    elif algo == "brat_p":
        if K is None:
            raise ConfigError("K is required for the parallel fixed point")
        A = np.eye(n) + (K - 1) * Kbar
    else:
        raise ConfigError(f"unknown algo {algo!r}")
    rhs = Kbar @ y if algo != "brat_p" else K * (Kbar @ y)
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"fixed-point system is singular (cond~{np.linalg.cond(A):.3e})"
        ) from exc
    return sol
