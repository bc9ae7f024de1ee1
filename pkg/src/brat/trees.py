"""Regression-tree weak learner with explicit leaf-membership bookkeeping.

Every fitted tree remembers, for each of the n training points, the leaf
it routes to and whether it belonged to the fitting subsample. Those two
records are what later turn an ensemble into an empirical kernel: the
influence weight of training point j on a query x is 1/(number of
subsampled points in x's leaf) whenever j is one of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, DataError

SPLIT_RULES = ("greedy_variance", "median")

# Relative tolerance separating a real variance reduction from rounding
# noise when deciding whether a greedy split is worth taking.
_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class TreeParams:
    """Weak-learner settings.

    max_depth 0 is allowed and yields a root-only tree. min_leaf counts
    subsampled points per leaf; "auto" resolves to ceil(n^(1/(d+2))),
    which keeps per-leaf influence weights small as n grows.
    """

    max_depth: int = 4
    min_leaf: int | str = "auto"
    split_rule: str = "greedy_variance"
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.max_depth, int) or self.max_depth < 0:
            raise ConfigError(f"tree.max_depth must be an integer >= 0, got {self.max_depth}")
        if self.min_leaf != "auto":
            if not isinstance(self.min_leaf, int) or self.min_leaf < 1:
                raise ConfigError(f"tree.min_leaf must be 'auto' or an integer >= 1, got {self.min_leaf}")
        if self.split_rule not in SPLIT_RULES:
            raise ConfigError(f"tree.split_rule must be one of {SPLIT_RULES}, got {self.split_rule!r}")

    def to_dict(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "split_rule": self.split_rule,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "TreeParams":
        return TreeParams(
            max_depth=d["max_depth"],
            min_leaf=d["min_leaf"],
            split_rule=d["split_rule"],
            seed=d.get("seed", 0),
        )


def resolve_min_leaf(min_leaf: int | str, n: int, d: int) -> int:
    if min_leaf == "auto":
        return max(1, math.ceil(n ** (1.0 / (d + 2))))
    return int(min_leaf)


@dataclass
class RegressionTree:
    """A fitted partition with leaf values and training-set bookkeeping.

    Node arrays are parallel: internal nodes carry (feature, threshold,
    left, right); leaves carry a compact leaf index into `leaf_values`.
    Trees are immutable once fitted; refits return new instances sharing
    the structure arrays.
    """

    feature: np.ndarray            # (m,) int32, -1 at leaves
    threshold: np.ndarray          # (m,) float64, nan at leaves
    left: np.ndarray               # (m,) int32, -1 at leaves
    right: np.ndarray              # (m,) int32, -1 at leaves
    node_leaf: np.ndarray          # (m,) int32 compact leaf index, -1 internal
    leaf_values: np.ndarray        # (L,) float64
    train_leaf_ids: np.ndarray     # (n,) int32 leaf index of every training point
    subsample_mask: np.ndarray     # (n,) bool
    leaf_subsample_counts: np.ndarray  # (L,) int64
    n_features: int

    @property
    def n_leaves(self) -> int:
        return self.leaf_values.shape[0]

    @property
    def n_train(self) -> int:
        return self.train_leaf_ids.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for each row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n_features:
            raise DataError(f"expected {self.n_features} features, got {X.shape[1]}")
        idx = np.zeros(X.shape[0], dtype=np.int64)
        feat = self.feature[idx]
        active = feat >= 0
        while active.any():
            rows = np.nonzero(active)[0]
            f = self.feature[idx[rows]]
            thr = self.threshold[idx[rows]]
            go_left = X[rows, f] <= thr
            nxt = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])
            idx[rows] = nxt
            active[rows] = self.feature[nxt] >= 0
        return self.node_leaf[idx].astype(np.int64)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_values[self.apply(X)]

    def train_predictions(self) -> np.ndarray:
        """Predictions at every training point, straight from stored leaf ids."""
        return self.leaf_values[self.train_leaf_ids]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.feature.shape[0]):
            if self.feature[i] >= 0:
                nodes.append({
                    "split_feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                })
            else:
                leaf = int(self.node_leaf[i])
                nodes.append({
                    "leaf_value": float(self.leaf_values[leaf]),
                    "leaf_id": leaf,
                })
        return {
            "nodes": nodes,
            "train_leaf_ids": [int(v) for v in self.train_leaf_ids],
            "subsample_mask": [int(v) for v in self.subsample_mask],
            "n_features": self.n_features,
        }

    @staticmethod
    def from_dict(d: dict) -> "RegressionTree":
        nodes = d["nodes"]
        m = len(nodes)
        feature = np.full(m, -1, dtype=np.int32)
        threshold = np.full(m, np.nan, dtype=np.float64)
        left = np.full(m, -1, dtype=np.int32)
        right = np.full(m, -1, dtype=np.int32)
        node_leaf = np.full(m, -1, dtype=np.int32)
        leaf_vals = {}
        for i, nd in enumerate(nodes):
            if "split_feature" in nd:
                feature[i] = nd["split_feature"]
                threshold[i] = nd["threshold"]
                left[i] = nd["left"]
                right[i] = nd["right"]
            else:
                node_leaf[i] = nd["leaf_id"]
                leaf_vals[nd["leaf_id"]] = nd["leaf_value"]
        n_leaves = len(leaf_vals)
        leaf_values = np.zeros(n_leaves, dtype=np.float64)
        for lid, v in leaf_vals.items():
            leaf_values[lid] = v
        train_leaf_ids = np.asarray(d["train_leaf_ids"], dtype=np.int32)
        subsample_mask = np.asarray(d["subsample_mask"], dtype=bool)
        counts = np.bincount(train_leaf_ids[subsample_mask], minlength=n_leaves).astype(np.int64)
        return RegressionTree(
            feature=feature, threshold=threshold, left=left, right=right,
            node_leaf=node_leaf, leaf_values=leaf_values,
            train_leaf_ids=train_leaf_ids, subsample_mask=subsample_mask,
            leaf_subsample_counts=counts, n_features=d["n_features"],
        )


def _as_mask(subsample, n: int) -> np.ndarray:
    arr = np.asarray(subsample)
    if arr.dtype == bool:
        if arr.shape != (n,):
            raise DataError(f"subsample mask has shape {arr.shape}, expected ({n},)")
        return arr.copy()
    mask = np.zeros(n, dtype=bool)
    mask[arr.astype(np.int64)] = True
    return mask


def _best_split_greedy(X, z, pts, min_leaf):
    """Best (feature, threshold) by SSE reduction, midpoint thresholds.

    Ties break toward the lowest feature index, then the smallest
    threshold. Returns None when no split clears min_leaf on both sides
    with a real gain.
    """
    m = pts.shape[0]
    if m < 2 * min_leaf:
        return None
    zs_all = z[pts]
    tol = _GAIN_RTOL * max(1.0, float(np.dot(zs_all, zs_all)))
    best_gain = tol
    best = None
    k = np.arange(1, m)
    for f in range(X.shape[1]):
        xv = X[pts, f]
        order = np.argsort(xv, kind="stable")
        xs = xv[order]
        zs = zs_all[order]
        distinct = xs[1:] > xs[:-1]
        if not distinct.any():
            continue
        cs = np.cumsum(zs)
        total = cs[-1]
        gains = cs[:-1] ** 2 / k + (total - cs[:-1]) ** 2 / (m - k) - total ** 2 / m
        valid = distinct & (k >= min_leaf) & (m - k >= min_leaf)
        if not valid.any():
            continue
        gains = np.where(valid, gains, -np.inf)
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            best_gain = float(gains[i])
            best = (f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def _best_split_median(X, z, pts, min_leaf):
    """Best feature by the SSE reduction of splitting at its median.

    Median splits proceed even at zero gain (they exist to balance the
    partition); a feature is only skipped when its median split would
    leave a side empty or below min_leaf.
    """
    m = pts.shape[0]
    if m < 2 * min_leaf:
        return None
    zs = z[pts]
    total = float(zs.sum())
    base = total ** 2 / m
    best_gain = -np.inf
    best = None
    for f in range(X.shape[1]):
        xv = X[pts, f]
        med = float(np.median(xv))
        lmask = xv <= med
        nl = int(lmask.sum())
        nr = m - nl
        if nl < min_leaf or nr < min_leaf or nl == 0 or nr == 0:
            continue
        sl = float(zs[lmask].sum())
        gain = sl ** 2 / nl + (total - sl) ** 2 / nr - base
        if gain > best_gain:
            best_gain = gain
            best = (f, med)
    return best


def fit_tree(ds: Dataset, residuals: np.ndarray, subsample, params: TreeParams) -> RegressionTree:
    """Grow a tree on the subsampled rows, then route all n training points.

    Splits are searched over subsampled points only; leaf values are mean
    residuals of the subsampled members. Afterwards every training point
    (in-sample or not) is assigned its leaf so influence weights can be
    recovered later.
    """
    X = ds.features
    n, d = X.shape
    z = np.asarray(residuals, dtype=np.float64)
    if z.shape != (n,):
        raise DataError(f"residuals have shape {z.shape}, expected ({n},)")
    if not np.isfinite(z).all():
        raise DataError("residuals contain non-finite entries")
    mask = _as_mask(subsample, n)
    n_sub = int(mask.sum())
    if n_sub == 0:
        raise DataError("empty subsample")
    min_leaf = resolve_min_leaf(params.min_leaf, n, d)
    if n_sub < min_leaf:
        raise DataError(f"subsample of {n_sub} points is below min_leaf={min_leaf}")

    split_fn = _best_split_greedy if params.split_rule == "greedy_variance" else _best_split_median

    feature, threshold, left, right, node_leaf = [], [], [], [], []
    leaf_values = []

    def grow(pts: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        node_leaf.append(-1)
        sp = None
        if depth < params.max_depth:
            sp = split_fn(X, z, pts, min_leaf)
        if sp is None:
            node_leaf[node] = len(leaf_values)
            leaf_values.append(float(z[pts].mean()))
            return node
        f, thr = sp
        go_left = X[pts, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(pts[go_left], depth + 1)
        right[node] = grow(pts[~go_left], depth + 1)
        return node

    grow(np.nonzero(mask)[0], 0)

    tree = RegressionTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        node_leaf=np.asarray(node_leaf, dtype=np.int32),
        leaf_values=np.asarray(leaf_values, dtype=np.float64),
        train_leaf_ids=np.zeros(n, dtype=np.int32),
        subsample_mask=mask,
        leaf_subsample_counts=np.zeros(len(leaf_values), dtype=np.int64),
        n_features=d,
    )
    ids = tree.apply(X).astype(np.int32)
    counts = np.bincount(ids[mask], minlength=tree.n_leaves).astype(np.int64)
    tree.train_leaf_ids = ids
    tree.leaf_subsample_counts = counts
    return tree


def predict_tree(tree: RegressionTree, x: np.ndarray) -> float:
    """Value of the leaf containing the single point x."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(tree.predict(x)[0])


def structure_vector(tree: RegressionTree, x: np.ndarray) -> np.ndarray:
    """Influence weights of the n training points on the prediction at x.

    Weight 1/(subsampled count of x's leaf) on each subsampled co-leaf
    point, 0 elsewhere. Sums to 1 except for leaves emptied by a
    structure-frozen refit, which contribute all zeros.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    leaf = int(tree.apply(x)[0])
    w = np.zeros(tree.n_train, dtype=np.float64)
    c = int(tree.leaf_subsample_counts[leaf])
    if c > 0:
        members = (tree.train_leaf_ids == leaf) & tree.subsample_mask
        w[members] = 1.0 / c
    return w


def refit_leaf_values(tree: RegressionTree, ds2: Dataset, targets2: np.ndarray) -> RegressionTree:
    """Replace leaf values by means of `targets2` routed through the tree.

    Leaves receiving no ds2 points keep their old value. Structure and
    training-set bookkeeping are untouched.
    """
    if ds2.n < 1:
        raise DataError("refit dataset is empty")
    t2 = np.asarray(targets2, dtype=np.float64)
    if t2.shape != (ds2.n,):
        raise DataError(f"targets have shape {t2.shape}, expected ({ds2.n},)")
    ids = tree.apply(ds2.features)
    cnt = np.bincount(ids, minlength=tree.n_leaves)
    sums = np.bincount(ids, weights=t2, minlength=tree.n_leaves)
    new_vals = np.where(cnt > 0, sums / np.maximum(cnt, 1), tree.leaf_values)
    return RegressionTree(
        feature=tree.feature, threshold=tree.threshold, left=tree.left,
        right=tree.right, node_leaf=tree.node_leaf,
        leaf_values=new_vals,
        train_leaf_ids=tree.train_leaf_ids, subsample_mask=tree.subsample_mask,
        leaf_subsample_counts=tree.leaf_subsample_counts,
        n_features=tree.n_features,
    )


def clone_structure_refit(tree: RegressionTree, ds: Dataset, residuals: np.ndarray,
                          subsample) -> RegressionTree:
    """Copy the split structure verbatim; recompute values from new residuals.

    Leaf values become means of the new residuals over the new subsample;
    leaves with no new subsampled members get value 0 and weight 0 in
    structure vectors. Used to freeze the structure distribution after a
    warm-up phase.
    """
    z = np.asarray(residuals, dtype=np.float64)
    if z.shape != (ds.n,):
        raise DataError(f"residuals have shape {z.shape}, expected ({ds.n},)")
    mask = _as_mask(subsample, ds.n)
    ids = tree.apply(ds.features).astype(np.int32)
    cnt = np.bincount(ids[mask], minlength=tree.n_leaves).astype(np.int64)
    sums = np.bincount(ids[mask], weights=z[mask], minlength=tree.n_leaves)
    new_vals = np.where(cnt > 0, sums / np.maximum(cnt, 1), 0.0)
    return RegressionTree(
        feature=tree.feature, threshold=tree.threshold, left=tree.left,
        right=tree.right, node_leaf=tree.node_leaf,
        leaf_values=new_vals,
        train_leaf_ids=ids, subsample_mask=mask,
        leaf_subsample_counts=cnt,
        n_features=tree.n_features,
    )
