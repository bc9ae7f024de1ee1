"""Noise estimation, the three interval families, width calibration, and
the chi-squared variable-importance test.

Interval centers are the rescaled ensemble predictions; half-widths come
from the weight-vector norm behind each prediction, either exact (dense
kernel) or sketched (landmark factors). Reproduction intervals widen the
confidence interval by sqrt(2) because the difference of two independent
equally-noisy estimates doubles the variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boost import BoostParams, BratModel, train
from .data import Dataset
from .errors import ConfigError, DataError, NumericalError
from .kernel import (
    KernelEstimate,
    NystromSketch,
    estimate_K_matrix,
    k_batch,
    nystrom_build,
    sketched_predict,
    sketched_r_norm,
)
from .stats import chi2_quantile, chi2_sf, normal_quantile

INTERVAL_KINDS = ("ci", "pi", "ri")

GAMMA_LO = 1e-3
GAMMA_HI = 1e3
GAMMA_TOL = 1e-3


@dataclass(frozen=True)
class NoiseEstimate:
    """Root mean squared calibration residual."""

    sigma_hat: float
    n_calib: int


@dataclass(frozen=True)
class Interval:
    center: float
    half_width: float
    kind: str
    alpha: float
    gamma: float = 1.0

    def contains(self, v: float) -> bool:
        return abs(v - self.center) <= self.half_width

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width


@dataclass(frozen=True)
class ViTestResult:
    statistic: float
    dof: int
    p_value: float
    reject: bool
    jitter_used: float

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "reject": bool(self.reject),
            "jitter_used": self.jitter_used,
        }


def estimate_sigma(model: BratModel, calib: Dataset) -> NoiseEstimate:
    """Noise scale from rescaled predictions on a held-out set."""
    if calib.n < 1:
        raise DataError("calibration set is empty")
    resid = calib.response - model.predict(calib.features, rescaled=True)
    return NoiseEstimate(sigma_hat=float(np.sqrt(np.mean(resid ** 2))), n_calib=calib.n)


def weight_norms(state, model: BratModel, X: np.ndarray) -> np.ndarray:
    """Weight-vector norms at the rows of X, exact or sketched."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if isinstance(state, KernelEstimate):
        rows = k_batch(model, X)
        R = state.solver().weights_many(rows)
        return np.linalg.norm(R, axis=1)
    if isinstance(state, NystromSketch):
        kt = state.ktilde(X)
        return np.array([sketched_r_norm(state, kt[i]) for i in range(kt.shape[0])])
    raise ConfigError(f"unsupported kernel state {type(state).__name__}")


def _half_widths(model, kind, alpha, sigma_hat, gamma, norms):
    if kind not in INTERVAL_KINDS:
        raise ConfigError(f"interval kind must be one of {INTERVAL_KINDS}, got {kind!r}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0,1), got {alpha}")
    z = normal_quantile(1.0 - alpha / 2.0)
    scale = model.rescale
    if kind == "ci":
        base = scale * sigma_hat * norms
    elif kind == "pi":
        base = scale * sigma_hat * np.sqrt(1.0 + norms ** 2)
    else:
        base = scale * sigma_hat * norms * math.sqrt(2.0)
    return gamma * z * base


def interval_batch(model: BratModel, state, X: np.ndarray, kind: str, alpha: float,
                   sigma_hat: float, gamma: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Centers and half-widths for the rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    centers = model.predict(X, rescaled=True)
    norms = weight_norms(state, model, X)
    halves = _half_widths(model, kind, alpha, sigma_hat, gamma, norms)
    return centers, halves


def _single_interval(model, state, x, alpha, sigma_hat, gamma, kind) -> Interval:
    c, h = interval_batch(model, state, np.asarray(x).reshape(1, -1), kind, alpha, sigma_hat, gamma)
    return Interval(center=float(c[0]), half_width=float(h[0]), kind=kind,
                    alpha=alpha, gamma=gamma)


def confidence_interval(model, state, x, alpha, sigma_hat, gamma=1.0) -> Interval:
    """Interval for the underlying signal at x."""
    return _single_interval(model, state, x, alpha, sigma_hat, gamma, "ci")


def prediction_interval(model, state, x, alpha, sigma_hat, gamma=1.0) -> Interval:
    """Interval for a new response at x."""
    return _single_interval(model, state, x, alpha, sigma_hat, gamma, "pi")


def reproduction_interval(model, state, x, alpha, sigma_hat, gamma=1.0) -> Interval:
    """Interval for the prediction of an independently retrained model."""
    return _single_interval(model, state, x, alpha, sigma_hat, gamma, "ri")


def _gamma_search(ratios: np.ndarray, alpha: float) -> float:
    """Smallest multiplier covering at least a 1 - alpha fraction of the
    residual-to-width ratios, by doubling then bisection on [1e-3, 1e3]
    to within 1e-3. Returns exactly 1.0 when coverage lands on the target
    there."""
    ratios = np.asarray(ratios, dtype=np.float64)
    m = ratios.shape[0]
    need = math.ceil((1.0 - alpha) * m - 1e-12)

    def covered(g: float) -> int:
        return int(np.sum(ratios <= g))

    c1 = covered(1.0)
    if c1 == need:
        return 1.0
    if covered(GAMMA_LO) >= need:
        return GAMMA_LO
    if c1 >= need:
        lo, hi = GAMMA_LO, 1.0
    else:
        lo = 1.0
        hi = 2.0
        while covered(hi) < need and hi < GAMMA_HI:
            lo, hi = hi, min(2.0 * hi, GAMMA_HI)
        if covered(hi) < need:
            raise NumericalError("intervals uncalibratable: target coverage unreachable at gamma=1e3")
    while hi - lo > GAMMA_TOL:
        mid = 0.5 * (lo + hi)
        if covered(mid) >= need:
            hi = mid
        else:
            lo = mid
    return hi


def calibrate_widths(model: BratModel, state, calib: Dataset, alpha: float,
                     kind: str) -> float:
    """Smallest width multiplier gamma whose intervals cover at least
    1 - alpha of the calibration responses.

    The noise scale comes from the calibration residuals themselves, so
    the returned gamma corrects only the shape mismatch between plug-in
    widths and realized errors.
    """
    if calib.n < 20:
        raise DataError(f"calibration needs >= 20 points, got {calib.n}")
    sigma = estimate_sigma(model, calib).sigma_hat
    centers, base = interval_batch(model, state, calib.features, kind, alpha, sigma, 1.0)
    resid = np.abs(calib.response - centers)
    if np.all(base == 0.0):
        if np.any(resid > 0):
            raise NumericalError("intervals uncalibratable: zero widths with nonzero residuals")
        return GAMMA_LO
    with np.errstate(divide="ignore"):
        ratios = np.where(base > 0, resid / np.where(base > 0, base, 1.0), np.inf)
    ratios = np.where((base == 0) & (resid == 0), 0.0, ratios)
    return _gamma_search(ratios, alpha)


_XI_RCOND = 1e-12


def _vi_statistic(dhat: np.ndarray, Xi: np.ndarray, sigma_hat: float, alpha: float) -> ViTestResult:
    """Chi-squared statistic from the prediction-difference vector and its
    covariance shape; jitters a numerically singular covariance before
    giving up.

    Near-zero covariance eigenvalues are common at finite ensemble size
    (holdout points sharing every leaf give identical weight rows), so
    singularity is judged on the eigenvalue spread, not on whether the
    solve happens to raise.
    """
    m = dhat.shape[0]
    jitter_used = 0.0
    evals = np.linalg.eigvalsh(Xi)
    if evals[-1] <= 0 or evals[0] < _XI_RCOND * evals[-1]:
        jitter_used = 1e-8 * float(np.trace(Xi)) / m
        if jitter_used <= 0:
            jitter_used = 1e-12
        Xi = Xi + jitter_used * np.eye(m)
    try:
        sol = np.linalg.solve(Xi, dhat)
    except np.linalg.LinAlgError:
        sol = None
    if sol is None or not np.isfinite(sol).all():
        raise NumericalError("difference covariance is singular even after jitter")
    if sigma_hat <= 0:
        stat = 0.0 if np.allclose(dhat, 0.0) else np.inf
    else:
        stat = float(dhat @ sol) / sigma_hat ** 2
    stat = max(stat, 0.0)
    threshold = chi2_quantile(m, 1.0 - alpha)
    return ViTestResult(
        statistic=stat,
        dof=m,
        p_value=chi2_sf(m, stat),
        reject=bool(stat > threshold),
        jitter_used=jitter_used,
    )


def _integrity_model(struct_ds: Dataset, value_ds: Dataset, params: BoostParams):
    """Train on one dataset, then rebuild every tree's membership
    bookkeeping on another.

    The resulting kernel weights data the split selection never saw,
    giving the structure-value isolation the chi-squared null needs:
    weight vectors built from adaptive structures otherwise correlate
    with the very noise they average.
    """
    from .boost import BratModel
    from .trees import clone_structure_refit

    grown = train(struct_ds, params)
    full_mask = np.ones(value_ds.n, dtype=bool)

    def clone(tree):
        return clone_structure_refit(tree, value_ds, value_ds.response, full_mask)

    if grown.algo == "brat_p":
        trees = [[clone(t) for t in row] for row in grown.trees]
    else:
        trees = [clone(t) for t in grown.trees]
    model = BratModel(algo=grown.algo, trees=trees, params=grown.params,
                      rescale=grown.rescale, train_n=value_ds.n)
    return model, value_ds


def variable_importance_test(full: Dataset, reduced_features, holdout: Dataset,
                             params: BoostParams, alpha: float,
                             sketch: dict | None = None,
                             sigma_hat: float | None = None,
                             integrity: bool = True) -> ViTestResult:
    """Test whether the response depends on features outside `reduced_features`.

    The training data is split in half: one model sees all features, the
    other only the reduced set. Their weight vectors at the holdout
    points, each living on its own training half and zero-padded onto the
    shared index set, give a prediction-difference vector whose Gram
    matrix is the covariance shape of the chi-squared statistic. With
    `sketch` = {"s": landmarks, "r": test points}, the landmark factors
    of both models replace the dense solves and the degrees of freedom
    drop to r.

    With `integrity` on (the default) the halves trade structures: each
    model's trees are grown on the other half and its kernel bookkeeping
    is rebuilt on its own half, so weight vectors are independent of the
    responses they multiply. Without it the statistic is
    anticonservative.

    sigma_hat defaults to the all-features model's residual scale on the
    holdout.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0,1), got {alpha}")
    reduced = sorted(set(int(c) for c in reduced_features))
    if not reduced or any(c < 0 or c >= full.d for c in reduced):
        raise ConfigError(f"reduced feature set {reduced} is not a valid subset of 0..{full.d - 1}")
    if holdout.n < 1:
        raise DataError("holdout set is empty")

    rng = np.random.default_rng(params.seed)
    perm = rng.permutation(full.n)
    half = full.n // 2
    ds1 = full.take(np.sort(perm[:half]))
    ds2 = full.take(np.sort(perm[half:])).restrict(reduced)

    if integrity:
        ds1_red = full.take(np.sort(perm[:half])).restrict(reduced)
        ds2_all = full.take(np.sort(perm[half:]))
        model1, val1 = _integrity_model(ds2_all, ds1, params)
        model2, val2 = _integrity_model(ds1_red, ds2, params)
    else:
        model1, val1 = train(ds1, params), ds1
        model2, val2 = train(ds2, params), ds2

    X_hold = holdout.features
    X_hold_red = X_hold[:, reduced]

    if sigma_hat is None:
        resid = holdout.response - model1.predict(X_hold, rescaled=True)
        sigma_hat = float(np.sqrt(np.mean(resid ** 2)))

    if sketch is None:
        ke1 = estimate_K_matrix(model1)
        ke2 = estimate_K_matrix(model2)
        R1 = ke1.solver().weights_many(k_batch(model1, X_hold))
        R2 = ke2.solver().weights_many(k_batch(model2, X_hold_red))
        dhat = R1 @ val1.response - R2 @ val2.response
        # Cross terms vanish: the two weight blocks live on disjoint halves.
        Xi = R1 @ R1.T + R2 @ R2.T
    else:
        s = int(sketch["s"])
        r = int(sketch.get("r", holdout.n))
        method = sketch.get("method", "uniform")
        seed = int(sketch.get("seed", params.seed))
        if r > holdout.n:
            raise ConfigError(f"sketched test points r={r} exceed holdout size {holdout.n}")
        ke1 = estimate_K_matrix(model1)
        ke2 = estimate_K_matrix(model2)
        sk1 = nystrom_build(ke1, min(s, val1.n), method, val1.response, seed)
        sk2 = nystrom_build(ke2, min(s, val2.n), method, val2.response, seed)
        sub = np.sort(np.random.default_rng(seed).choice(holdout.n, size=r, replace=False))
        kt1 = sk1.ktilde(X_hold[sub])
        kt2 = sk2.ktilde(X_hold_red[sub])
        d1 = np.array([sketched_predict(sk1, kt1[i]) for i in range(r)])
        d2 = np.array([sketched_predict(sk2, kt2[i]) for i in range(r)])
        dhat = d1 - d2
        Xi = kt1 @ sk1.SigmaHat @ kt1.T + kt2 @ sk2.SigmaHat @ kt2.T

    return _vi_statistic(dhat, Xi, sigma_hat, alpha)
