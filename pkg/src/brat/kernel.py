"""Empirical tree-kernel estimation, KRR weight computation, and the
landmark (Nystrom) sketching pipeline for near-linear-time inference.

The ensemble's kernel row for a query x is the average, over trees, of
the per-tree influence weights: 1/(subsampled count of x's leaf) on each
subsampled co-leaf training point. The n x n matrix of those rows at the
training points is the kernel estimate; the weight vector behind a
prediction solves a shrunken linear system in that matrix.

Because per-tree influence is asymmetric under row subsampling, weight
vectors solve against the transpose of the kernel estimate: if the
prediction is khat' (1/lam I + q Khat)^{-1} y, the weight vector r with
prediction <r, y> is (1/lam I + q Khat')^{-1} khat.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spl

from .boost import BratModel
from .data import Dataset
from .errors import ConfigError, DataError, NumericalError

DEFAULT_DENSE_CAP = 4000

# Relative eigenvalue/singular-value cutoff for every pseudo-inverse in
# the sketching pipeline.
PINV_CUTOFF = 1e-10


def effective_shrinkage(algo: str, lam: float, q: float, K: int) -> tuple[float, float]:
    """Map each algorithm onto the (lam, q) pair of the shared weight
    formula: the parallel solve (I + (K-1)Khat)^{-1} K equals the dropout
    solve with lam=K, q=(K-1)/K."""
    if algo in ("brat_d", "boulevard"):
        return lam, q
    if algo == "brat_p":
        return float(K), (K - 1.0) / K
    raise ConfigError(f"unknown algo {algo!r}")


@dataclass
class KernelEstimate:
    """Empirical kernel matrix plus the handles needed to extend it to
    new query points."""

    Khat: np.ndarray | None
    model: BratModel | None
    algo: str
    lam: float
    q: float
    K: int
    symmetrized: bool = False
    _solver: "KrrSolver | None" = field(default=None, repr=False)

    @property
    def n(self) -> int:
        if self.Khat is not None:
            return self.Khat.shape[0]
        return self.model.train_n

    def solver(self) -> "KrrSolver":
        if self._solver is None:
            self._solver = KrrSolver(self)
        return self._solver


def _tree_weights(tree) -> np.ndarray:
    """Per-training-point influence weight within its own leaf."""
    c = tree.leaf_subsample_counts[tree.train_leaf_ids]
    w = np.where(tree.subsample_mask & (c > 0), 1.0 / np.maximum(c, 1), 0.0)
    return w


def k_batch(model: BratModel, X: np.ndarray) -> np.ndarray:
    """Kernel rows (queries x training points) for the rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    m = X.shape[0]
    n = model.train_n
    out = np.zeros((m, n), dtype=np.float64)
    T = 0
    for tree in model.iter_trees():
        T += 1
        leaf_x = tree.apply(X)
        w = _tree_weights(tree)
        out += (leaf_x[:, None] == tree.train_leaf_ids[None, :]) * w[None, :]
    if T:
        out /= T
    return out


def estimate_k_vec(model: BratModel, x: np.ndarray) -> np.ndarray:
    """Kernel row of a single query point: the tree-averaged influence of
    each training point on the prediction at x."""
    return k_batch(model, np.asarray(x, dtype=np.float64).reshape(1, -1))[0]


def estimate_K_matrix(model: BratModel, train: Dataset | None = None,
                      symmetrize: bool = False,
                      cap: int = DEFAULT_DENSE_CAP) -> KernelEstimate:
    """Dense n x n kernel estimate from the stored leaf memberships.

    Row i is the kernel row of training point i, read off the per-tree
    bookkeeping without re-routing. Refuses n beyond `cap`; use the
    sketching path for larger problems.
    """
    n = model.train_n
    if train is not None and train.n != n:
        raise DataError(f"dataset has {train.n} rows but model was trained on {n}")
    if n > cap:
        raise ConfigError(
            f"n={n} exceeds the dense kernel cap {cap}; use the sketched path"
        )
    Khat = np.zeros((n, n), dtype=np.float64)
    T = 0
    for tree in model.iter_trees():
        T += 1
        L = tree.train_leaf_ids
        w = _tree_weights(tree)
        Khat += (L[:, None] == L[None, :]) * w[None, :]
    if T:
        Khat /= T
    if symmetrize:
        Khat = 0.5 * (Khat + Khat.T)
    p = model.params
    return KernelEstimate(
        Khat=Khat, model=model, algo=model.algo,
        lam=p.lam, q=p.q, K=p.trees_per_round_K,
        symmetrized=symmetrize,
    )


def kernel_columns(model: BratModel, idx: np.ndarray) -> np.ndarray:
    """Columns of the kernel estimate at the given training indices:
    entry (i, j) is the influence of training point idx[j] on point i."""
    idx = np.asarray(idx, dtype=np.int64)
    n = model.train_n
    out = np.zeros((n, idx.shape[0]), dtype=np.float64)
    T = 0
    for tree in model.iter_trees():
        T += 1
        L = tree.train_leaf_ids
        w = _tree_weights(tree)
        out += (L[:, None] == L[idx][None, :]) * w[idx][None, :]
    if T:
        out /= T
    return out


def kernel_rows_train(model: BratModel, idx: np.ndarray) -> np.ndarray:
    """Kernel rows at the given training indices, read off the stored
    leaf memberships without re-routing."""
    idx = np.asarray(idx, dtype=np.int64)
    n = model.train_n
    out = np.zeros((idx.shape[0], n), dtype=np.float64)
    T = 0
    for tree in model.iter_trees():
        T += 1
        L = tree.train_leaf_ids
        w = _tree_weights(tree)
        out += (L[idx][:, None] == L[None, :]) * w[None, :]
    if T:
        out /= T
    return out


@dataclass
class KrrWeights:
    """Weight vector behind a single KRR prediction."""

    r: np.ndarray
    norm2: float
    weight_sum: float

    @staticmethod
    def from_vector(r: np.ndarray) -> "KrrWeights":
        r = np.asarray(r, dtype=np.float64)
        return KrrWeights(r=r, norm2=float(np.linalg.norm(r)), weight_sum=float(r.sum()))


class KrrSolver:
    """Factorizes the weight system of a kernel estimate once and solves
    it for many query rows."""

    def __init__(self, ke: KernelEstimate):
        if ke.Khat is None:
            raise ConfigError("KrrSolver needs a dense kernel estimate")
        lam_e, q_e = effective_shrinkage(ke.algo, ke.lam, ke.q, ke.K)
        n = ke.Khat.shape[0]
        # Weight vectors solve the transposed system; see module docstring.
        self._A_T = (np.eye(n) / lam_e + q_e * ke.Khat).T.copy()
        self._lu = spl.lu_factor(self._A_T)
        self.n = n

    def _check(self, sol: np.ndarray) -> np.ndarray:
        if not np.isfinite(sol).all():
            raise NumericalError(
                f"weight system is singular (cond~{np.linalg.cond(self._A_T):.3e})"
            )
        return sol

    def weights_one(self, khat: np.ndarray) -> KrrWeights:
        sol = spl.lu_solve(self._lu, np.asarray(khat, dtype=np.float64))
        return KrrWeights.from_vector(self._check(sol))

    def weights_many(self, khat_rows: np.ndarray) -> np.ndarray:
        """Weight vectors for stacked kernel rows, returned row-per-query."""
        khat_rows = np.atleast_2d(np.asarray(khat_rows, dtype=np.float64))
        return self._check(spl.lu_solve(self._lu, khat_rows.T).T)


def _solve_weights(khat: np.ndarray, Khat: np.ndarray, lam_e: float, q_e: float) -> KrrWeights:
    khat = np.asarray(khat, dtype=np.float64)
    Khat = np.asarray(Khat, dtype=np.float64)
    n = Khat.shape[0]
    if Khat.shape != (n, n) or khat.shape != (n,):
        raise ConfigError(f"shape mismatch: Khat {Khat.shape}, khat {khat.shape}")
    A = np.eye(n) / lam_e + q_e * Khat
    try:
        r = np.linalg.solve(A.T, khat)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"weight system is singular (cond~{np.linalg.cond(A):.3e})"
        ) from exc
    if not np.isfinite(r).all():
        raise NumericalError(
            f"weight system is singular (cond~{np.linalg.cond(A):.3e})"
        )
    return KrrWeights.from_vector(r)


def krr_weights_d(khat: np.ndarray, Khat: np.ndarray, lam: float, q: float) -> KrrWeights:
    """Weights of the dropout-algorithm KRR limit for one query row."""
    if not 0.0 < lam <= 1.0:
        raise ConfigError(f"lambda must lie in (0,1], got {lam}")
    if not 0.0 <= q <= 1.0:
        raise ConfigError(f"q must lie in [0,1], got {q}")
    return _solve_weights(khat, Khat, lam, q)


def krr_weights_p(khat: np.ndarray, Khat: np.ndarray, K: int) -> KrrWeights:
    """Weights of the parallel-algorithm KRR limit for one query row."""
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    lam_e, q_e = effective_shrinkage("brat_p", 1.0, 1.0, K)
    return _solve_weights(khat, Khat, lam_e, q_e)


def _pinv(M: np.ndarray) -> np.ndarray:
    return np.linalg.pinv(M, rcond=PINV_CUTOFF)


@dataclass
class NystromSketch:
    """Landmark factors giving O(s) predictions and O(s^2) weight norms.

    The per-tree landmark tables let a query's landmark kernel
    coordinates be evaluated touching the ensemble but never the full
    training set. column_block/row_block/landmark_block are the raw
    kernel slices kept for diagnostics and tests.
    """

    landmark_indices: np.ndarray
    LambdaTilde: np.ndarray        # (n, s)
    SigmaHat: np.ndarray           # (s, s)
    alpha_tilde: np.ndarray        # (s,)
    method: str
    model: BratModel | None = None
    column_block: np.ndarray | None = None    # (n, s) kernel rows of landmarks, transposed
    row_block: np.ndarray | None = None       # (s, n) kernel columns of landmarks, transposed
    landmark_block: np.ndarray | None = None  # (s, s)
    _lm_leaf_ids: np.ndarray | None = None    # (s, T)
    _lm_inbag: np.ndarray | None = None       # (s, T)
    _lm_weights: np.ndarray | None = None     # (s, T) influence weight of landmark in its leaf

    @property
    def s(self) -> int:
        return self.landmark_indices.shape[0]

    def ktilde(self, X: np.ndarray) -> np.ndarray:
        """Landmark coordinates of the kernel rows of X, shape (m, s).

        Cost scales with the ensemble size and s only, not with n.
        """
        if self.model is None:
            raise ConfigError("sketch was built without a model; pass ktilde directly")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        m = X.shape[0]
        out = np.zeros((m, self.s), dtype=np.float64)
        for t, tree in enumerate(self.model.iter_trees()):
            leaf_x = tree.apply(X)
            same = self._lm_leaf_ids[:, t][None, :] == leaf_x[:, None]
            out += same * self._lm_weights[:, t][None, :]
        out /= max(1, self.model.n_trees)
        return out


def _uniform_landmarks(n: int, s: int, rng: np.random.Generator) -> np.ndarray:
    return np.sort(rng.choice(n, size=s, replace=False))


def _kernel_diag(ke: KernelEstimate) -> np.ndarray:
    if ke.Khat is not None:
        return np.diag(ke.Khat).copy()
    diag = np.zeros(ke.model.train_n)
    T = 0
    for tree in ke.model.iter_trees():
        T += 1
        diag += _tree_weights(tree)
    return diag / max(1, T)


def _rows_of(ke: KernelEstimate, idx: np.ndarray) -> np.ndarray:
    """Rows of Khat at training indices idx."""
    if ke.Khat is not None:
        return ke.Khat[np.asarray(idx, dtype=np.int64)]
    return kernel_rows_train(ke.model, idx)


def _recursive_landmarks(ke: KernelEstimate, s: int, rng: np.random.Generator) -> np.ndarray:
    """Recursive ridge-leverage-score sampling of s landmark rows.

    Levels halve the point set; each level scores points against the
    sample passed up from the level below, with ridge regularization
    mu = trace(Khat)/s throughout, and the final level draws exactly s
    points without replacement proportionally to their scores.
    """
    n = ke.n
    if s >= n:
        return np.arange(n)
    diag = _kernel_diag(ke)
    mu = max(float(diag.sum()) / s, 1e-12)
    oversamp = max(np.log(s), 1.0)
    n_levels = int(np.ceil(np.log2(n / s))) if n > s else 0
    perm = rng.permutation(n)
    sizes = [n]
    for _ in range(n_levels):
        sizes.append(int(np.ceil(sizes[-1] / 2)))
    sample = np.arange(sizes[-1])
    indices = perm[sample]
    weights = np.ones(indices.shape[0])

    for level in reversed(range(n_levels + 1)):
        current = perm[:sizes[level]]
        KS = _rows_of(ke, current)[:, indices]
        SKS = KS[sample, :]
        reg = SKS + np.diag(mu * weights ** -2.0)
        try:
            R = np.linalg.solve(reg, KS.T).T
        except np.linalg.LinAlgError:
            R = (_pinv(reg) @ KS.T).T
        resid = np.maximum(0.0, diag[current] - np.sum(R * KS, axis=1))
        if level > 0:
            lev = np.minimum(1.0, oversamp * resid / mu)
            sample = np.nonzero(rng.random(sizes[level]) < lev)[0]
            if sample.size == 0:
                sample = rng.choice(sizes[level], size=min(s, sizes[level]), replace=False)
                lev = np.full(sizes[level], min(1.0, s / sizes[level]))
            weights = np.sqrt(1.0 / np.maximum(lev[sample], 1e-12))
            indices = perm[sample]
        else:
            lev = np.minimum(1.0, resid / mu)
            if lev.sum() <= 0:
                chosen = rng.choice(n, size=s, replace=False)
            else:
                p = lev / lev.sum()
                nz = int(np.count_nonzero(p))
                if nz < s:
                    # Too few informative points; pad with uniform mass.
                    p = (p + 1.0 / n) / (p + 1.0 / n).sum()
                chosen = rng.choice(n, size=s, replace=False, p=p)
            indices = np.sort(perm[chosen])
    return indices


def nystrom_build(ke: KernelEstimate, s: int, method: str = "uniform",
                  y: np.ndarray | None = None, seed: int = 0) -> NystromSketch:
    """Build the landmark sketch of a kernel estimate.

    Precomputes the n x s factor whose rows reconstruct weight vectors
    from landmark kernel coordinates, its s x s Gram matrix for weight
    norms, and the length-s coefficient vector for point predictions.
    All pseudo-inverses use a relative cutoff of 1e-10.
    """
    n = ke.n
    if not 1 <= s <= n:
        raise ConfigError(f"sketch size s must lie in [1, {n}], got {s}")
    if y is None:
        raise ConfigError("nystrom_build needs the training response y")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n,):
        raise ConfigError(f"response has shape {y.shape}, expected ({n},)")
    if method not in ("uniform", "recursive"):
        raise ConfigError(f"sketch method must be 'uniform' or 'recursive', got {method!r}")
    if ke.Khat is None and ke.model is None:
        raise ConfigError("kernel estimate carries neither a matrix nor a model")
    rng = np.random.default_rng(seed)
    if s == n:
        lm = np.arange(n)
    elif method == "uniform":
        lm = _uniform_landmarks(n, s, rng)
    else:
        lm = _recursive_landmarks(ke, s, rng)

    lam_e, q_e = effective_shrinkage(ke.algo, ke.lam, ke.q, ke.K)

    # Blocks of the transposed kernel operator A = Khat': its landmark
    # columns are the kernel rows of the landmark points, which span the
    # space that kernel rows of new queries are reconstructed in.
    if ke.Khat is not None:
        U = ke.Khat[lm].T.copy()          # (n, s) columns of A
        V = ke.Khat[:, lm].T.copy()       # (s, n) rows of A
    else:
        U = kernel_rows_train(ke.model, lm).T
        V = kernel_columns(ke.model, lm).T
    W_A = V[:, lm]                        # (s, s)
    if not np.any(W_A):
        raise NumericalError("landmark block is all zero; resample landmarks")

    # Rank-reduce the landmark block (relative cutoff 1e-10), then push the
    # shrunken inverse through the low-rank factors: with the sketched
    # operator PP @ QQ and a query row reconstructed as PP @ c, the weight
    # vector collapses to lam * PP @ (I + lam*q QQ@PP)^{-1} c. Only the
    # well-conditioned rank x rank middle matrix is ever inverted.
    Pw, sig, Qwt = np.linalg.svd(W_A)
    keep = sig > PINV_CUTOFF * sig[0]
    if not keep.any():
        raise NumericalError("landmark block is numerically zero; resample landmarks")
    Pw = Pw[:, keep]
    Qw = Qwt.T[:, keep]
    inv_root = 1.0 / np.sqrt(sig[keep])
    PP = U @ (Qw * inv_root[None, :])                 # (n, rho)
    QQ = (inv_root[:, None] * Pw.T) @ V               # (rho, n)
    mid = np.eye(PP.shape[1]) + lam_e * q_e * (QQ @ PP)
    if s == n:
        # Landmark coordinates are the full kernel row; no reconstruction
        # step, so the factors reduce to the exact shrunken inverse.
        LambdaTilde = lam_e * (np.eye(n) - lam_e * q_e * (PP @ np.linalg.solve(mid, QQ)))
    else:
        CC = inv_root[:, None] * Pw.T                 # (rho, s), c(x) = CC @ ktilde
        LambdaTilde = lam_e * (PP @ np.linalg.solve(mid, CC))
    SigmaHat = LambdaTilde.T @ LambdaTilde
    alpha_tilde = LambdaTilde.T @ y

    sketch = NystromSketch(
        landmark_indices=lm,
        LambdaTilde=LambdaTilde,
        SigmaHat=SigmaHat,
        alpha_tilde=alpha_tilde,
        method=method,
        model=ke.model,
        column_block=U,
        row_block=V,
        landmark_block=W_A,
    )
    if ke.model is not None:
        T = ke.model.n_trees
        slm = lm.shape[0]
        lm_leaf = np.zeros((slm, T), dtype=np.int64)
        lm_w = np.zeros((slm, T), dtype=np.float64)
        lm_in = np.zeros((slm, T), dtype=bool)
        for t, tree in enumerate(ke.model.iter_trees()):
            lm_leaf[:, t] = tree.train_leaf_ids[lm]
            w = _tree_weights(tree)
            lm_w[:, t] = w[lm]
            lm_in[:, t] = tree.subsample_mask[lm]
        sketch._lm_leaf_ids = lm_leaf
        sketch._lm_weights = lm_w
        sketch._lm_inbag = lm_in
    return sketch


def sketched_r_norm(sk: NystromSketch, ktilde: np.ndarray) -> float:
    """Weight-vector norm estimate sqrt(ktilde' SigmaHat ktilde), O(s^2)."""
    ktilde = np.asarray(ktilde, dtype=np.float64)
    if ktilde.shape != (sk.s,):
        raise ConfigError(f"ktilde has shape {ktilde.shape}, expected ({sk.s},)")
    val = float(ktilde @ sk.SigmaHat @ ktilde)
    if val < -1e-10:
        raise NumericalError(f"sketched norm produced negative quadratic form {val:.3e}")
    return float(np.sqrt(max(val, 0.0)))


def sketched_predict(sk: NystromSketch, ktilde: np.ndarray) -> float:
    """Point prediction <ktilde, alpha_tilde>, O(s)."""
    ktilde = np.asarray(ktilde, dtype=np.float64)
    if ktilde.shape != (sk.s,):
        raise ConfigError(f"ktilde has shape {ktilde.shape}, expected ({sk.s},)")
    return float(ktilde @ sk.alpha_tilde)
