"""Simulation scenarios behind the `sim` command.

Each scenario writes machine-readable CSVs with documented headers plus a
summary JSON whose values are recomputable from the CSVs. Repetitions own
independent generators derived as base seed + rep index, so reruns are
deterministic and repetitions can be distributed over a worker pool.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import stats as sstats

from .boost import BoostParams, fixed_point_oracle, train
from .data import (
    Dataset,
    friedman_mean,
    gen_friedman,
    gen_sine_quadratic,
    gen_vi,
    sine_quadratic_mean,
)
from .errors import ConfigError
from .infer import calibrate_widths, estimate_sigma, interval_batch, variable_importance_test
from .kernel import estimate_K_matrix, k_batch
from .trees import TreeParams


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_summary(out_dir, summary):
    path = os.path.join(out_dir, "summary.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
    return path


def _merge(defaults: dict, overrides: dict | None) -> dict:
    cfg = dict(defaults)
    for k, v in (overrides or {}).items():
        if k not in defaults:
            raise ConfigError(f"unknown scenario option {k!r}")
        cfg[k] = v
    return cfg


def _run_reps(fn, args_list, workers: int):
    if workers <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, args_list))


# ---------------------------------------------------------------------------
# fixed-point: training predictions vs the closed-form limit

FIXED_POINT_DEFAULTS = {
    "n": 100,
    "sigma": 0.3,
    "seed": 7,
    "algos": ["brat_d", "brat_p"],
    "lam": 0.8,
    "dropout_p": 0.3,
    "xi": 0.8,
    "rounds_B": 20000,
    "K": 4,
    "freeze_after": 20,
    "max_depth": 3,
    "checkpoints": [2000, 20000],
    "demo_rounds_B": 200,
    "demo_alpha": 0.05,
}


def run_fixed_point(cfg: dict | None, out_dir: str) -> dict:
    cfg = _merge(FIXED_POINT_DEFAULTS, cfg)
    os.makedirs(out_dir, exist_ok=True)
    ds = gen_sine_quadratic(cfg["n"], cfg["sigma"], cfg["seed"])
    y = ds.response
    y_range = float(y.max() - y.min())
    summary = {"n": cfg["n"], "range_y": y_range, "tolerance": 0.05 * y_range, "algos": {}}

    for algo in cfg["algos"]:
        params = BoostParams(
            algo=algo,
            lam=cfg["lam"],
            dropout_p=cfg["dropout_p"] if algo == "brat_d" else 0.0,
            subsample_xi=cfg["xi"],
            rounds_B=cfg["rounds_B"],
            trees_per_round_K=cfg["K"] if algo == "brat_p" else 1,
            freeze_after=cfg["freeze_after"],
            tree=TreeParams(
                max_depth=cfg["max_depth"],
                split_rule="median" if algo == "brat_p" else "greedy_variance",
            ),
            seed=cfg["seed"],
        )
        trajectory = np.zeros((params.rounds_B - 1, cfg["n"]), dtype=np.float32)

        def record(b, yhat, _traj=trajectory):
            _traj[b - 1] = yhat

        t0 = time.perf_counter()
        model = train(ds, params, round_callback=record)
        kbar = estimate_K_matrix(model).Khat
        target = fixed_point_oracle(
            kbar, y, algo,
            lam=params.lam, q=params.q, K=params.trees_per_round_K,
        )
        elapsed = time.perf_counter() - t0
        gaps = np.abs(trajectory - target[None, :].astype(np.float32)).max(axis=1)
        rows = [(b + 1, float(gaps[b])) for b in range(gaps.shape[0])]
        write_csv(os.path.join(out_dir, f"fixed_point_{algo}.csv"), ["round", "sup_gap"], rows)
        checkpoints = {}
        for c in cfg["checkpoints"]:
            idx = min(int(c), gaps.shape[0]) - 1
            checkpoints[str(c)] = float(gaps[idx])
        summary["algos"][algo] = {
            "checkpoint_gaps": checkpoints,
            "final_gap": float(gaps[-1]),
            "train_seconds": elapsed,
        }

    _emit_interval_demo(cfg, out_dir)
    write_summary(out_dir, summary)
    return summary


def _emit_interval_demo(cfg: dict, out_dir: str) -> None:
    """Small 1-d run emitting interval and truth CSVs for the band plot."""
    ds = gen_sine_quadratic(max(cfg["n"], 200), cfg["sigma"], cfg["seed"] + 1)
    calib = gen_sine_quadratic(100, cfg["sigma"], cfg["seed"] + 2)
    params = BoostParams(
        algo="brat_d", lam=cfg["lam"], dropout_p=cfg["dropout_p"],
        subsample_xi=cfg["xi"], rounds_B=cfg["demo_rounds_B"],
        tree=TreeParams(max_depth=cfg["max_depth"]), seed=cfg["seed"],
    )
    model = train(ds, params)
    ke = estimate_K_matrix(model)
    sigma = estimate_sigma(model, calib).sigma_hat
    grid = np.linspace(0.0, 1.0, 101)[:, None]
    alpha = cfg["demo_alpha"]
    rows = []
    for kind in ("ci", "pi", "ri"):
        centers, halves = interval_batch(model, ke, grid, kind, alpha, sigma, 1.0)
        for i in range(grid.shape[0]):
            rows.append((i, float(centers[i]), float(centers[i] - halves[i]),
                         float(centers[i] + halves[i]), kind, alpha, 1.0))
    write_csv(os.path.join(out_dir, "intervals_1d.csv"),
              ["point_id", "prediction", "lower", "upper", "kind", "alpha", "gamma"], rows)
    truth = [(i, float(grid[i, 0]), float(sine_quadratic_mean(grid[i, 0])))
             for i in range(grid.shape[0])]
    write_csv(os.path.join(out_dir, "truth_1d.csv"), ["point_id", "x", "f"], truth)


# ---------------------------------------------------------------------------
# normality: standardized errors at a fixed test point across refits

NORMALITY_DEFAULTS = {
    "reps": 200,
    "n": 500,
    "sigma": 0.3,
    "x0": 0.5,
    "seed": 11,
    "lam": 0.8,
    "dropout_p": 0.3,
    "xi": 0.8,
    "rounds_B": 151,
    "max_depth": 7,
    "min_leaf": 4,
    "calib_n": 200,
    "workers": 1,
}


def _normality_rep(args) -> float:
    # Structures grow on one half and the kernel lives on the other, so
    # the weight-vector norm is a valid scale for the error; the adaptive
    # one-sample variant is anticonservative.
    from .infer import _integrity_model

    cfg, rep = args
    ds = gen_sine_quadratic(cfg["n"], cfg["sigma"], cfg["seed"] + 1000 + rep)
    calib = gen_sine_quadratic(cfg["calib_n"], cfg["sigma"], cfg["seed"] + 500_000 + rep)
    params = BoostParams(
        algo="brat_d", lam=cfg["lam"], dropout_p=cfg["dropout_p"],
        subsample_xi=cfg["xi"], rounds_B=cfg["rounds_B"],
        tree=TreeParams(max_depth=cfg["max_depth"], min_leaf=cfg["min_leaf"]),
        seed=cfg["seed"] + rep,
    )
    rng = np.random.default_rng(cfg["seed"] + 700_000 + rep)
    perm = rng.permutation(ds.n)
    half = ds.n // 2
    struct = ds.take(np.sort(perm[:half]))
    value = ds.take(np.sort(perm[half:]))
    model, val = _integrity_model(struct, value, params)
    solver = estimate_K_matrix(model).solver()
    x0 = np.array([[cfg["x0"]]])
    r0 = solver.weights_many(k_batch(model, x0))[0]
    pred = float(r0 @ val.response) * model.rescale
    norm = float(np.linalg.norm(r0))
    pred_cal = solver.weights_many(k_batch(model, calib.features)) @ val.response * model.rescale
    sigma_hat = float(np.sqrt(np.mean((calib.response - pred_cal) ** 2)))
    f0 = float(sine_quadratic_mean(np.array([cfg["x0"]]))[0])
    return (pred - f0) / (model.rescale * sigma_hat * norm)


def run_normality(cfg: dict | None, out_dir: str) -> dict:
    cfg = _merge(NORMALITY_DEFAULTS, cfg)
    os.makedirs(out_dir, exist_ok=True)
    zs = _run_reps(_normality_rep, [(cfg, r) for r in range(cfg["reps"])], cfg["workers"])
    zs = np.asarray(zs, dtype=np.float64)
    write_csv(os.path.join(out_dir, "normality.csv"), ["rep", "std_error"],
              [(r, float(zs[r])) for r in range(zs.shape[0])])
    ks = sstats.kstest(zs, "norm")
    summary = {
        "reps": int(zs.shape[0]),
        "ks_stat": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "mean": float(zs.mean()),
        "sd": float(zs.std(ddof=1)),
    }
    write_summary(out_dir, summary)
    return summary


# ---------------------------------------------------------------------------
# coverage: marginal/conditional interval coverage on the 5-d benchmark

COVERAGE_DEFAULTS = {
    "reps": 30,
    "n_train": 1000,
    "n_calib": 500,
    "n_test": 200,
    "sigma": 1.0,
    "alpha": 0.1,
    "seed": 5,
    "lam": 0.6,
    "dropout_p": 0.3,
    "xi": 0.8,
    "rounds_B": 201,
    "max_depth": 4,
    "workers": 1,
}


def _coverage_rep(args):
    cfg, rep, X_test = args
    ds = gen_friedman(cfg["n_train"], cfg["sigma"], cfg["seed"] + 1000 + rep)
    calib = gen_friedman(cfg["n_calib"], cfg["sigma"], cfg["seed"] + 500_000 + rep)
    params = BoostParams(
        algo="brat_d", lam=cfg["lam"], dropout_p=cfg["dropout_p"],
        subsample_xi=cfg["xi"], rounds_B=cfg["rounds_B"],
        tree=TreeParams(max_depth=cfg["max_depth"]), seed=cfg["seed"] + rep,
    )
    model = train(ds, params)
    ke = estimate_K_matrix(model)
    sigma_hat = estimate_sigma(model, calib).sigma_hat
    gamma_pi = calibrate_widths(model, ke, calib, cfg["alpha"], "pi")
    out = {}
    for kind, gamma in (("ci", 1.0), ("pi", gamma_pi), ("ri", 1.0)):
        centers, halves = interval_batch(model, ke, X_test, kind, cfg["alpha"], sigma_hat, gamma)
        out[kind] = (centers, halves, gamma)
    return out


def run_coverage(cfg: dict | None, out_dir: str) -> dict:
    cfg = _merge(COVERAGE_DEFAULTS, cfg)
    os.makedirs(out_dir, exist_ok=True)
    test = gen_friedman(cfg["n_test"], cfg["sigma"], cfg["seed"] + 10_000)
    f_true = friedman_mean(test.features)
    reps = cfg["reps"]
    results = _run_reps(_coverage_rep, [(cfg, r, test.features) for r in range(reps)],
                        cfg["workers"])
    rows = []
    per_kind_cov = {k: [] for k in ("ci", "pi", "ri")}
    per_kind_width = {k: [] for k in ("ci", "pi", "ri")}
    for rep, res in enumerate(results):
        nxt = results[(rep + 1) % reps]  # independent retrain for reproduction targets
        for kind in ("ci", "pi", "ri"):
            centers, halves, gamma = res[kind]
            if kind == "pi":
                target = test.response
            elif kind == "ci":
                target = f_true
            else:
                target = nxt["ci"][0]  # the other model's rescaled predictions
            covered = np.abs(target - centers) <= halves
            per_kind_cov[kind].append(covered)
            per_kind_width[kind].append(2.0 * halves)
            for i in range(test.n):
                rows.append((rep, i, kind, int(covered[i]), float(2.0 * halves[i]),
                             float(centers[i]), float(target[i]), cfg["alpha"], float(gamma)))
    write_csv(os.path.join(out_dir, "coverage.csv"),
              ["rep", "point_id", "kind", "covered", "width", "center", "target", "alpha", "gamma"],
              rows)
    summary = {"reps": reps, "alpha": cfg["alpha"], "kinds": {}}
    for kind in ("ci", "pi", "ri"):
        cov = np.asarray(per_kind_cov[kind], dtype=np.float64)
        summary["kinds"][kind] = {
            "marginal_coverage": float(cov.mean()),
            "mean_width": float(np.mean(per_kind_width[kind])),
        }
    write_summary(out_dir, summary)
    return summary


# ---------------------------------------------------------------------------
# vi-power: size and power of the variable-importance test

VI_POWER_DEFAULTS = {
    "reps": 50,
    "n_list": [1000],
    "w_list": [0.0, 2.0],
    "sigma": 1.0,
    "m_holdout": 25,
    "holdout_pool": 400,
    "interior_margin": 0.15,
    "calib_n": 200,
    "alpha": 0.05,
    "seed": 13,
    "lam": 1.0,
    "dropout_p": 0.95,
    # Subsampled structure fits keep the frozen pool diverse; with the
    # deterministic median rule a pool grown on full samples repeats the
    # same partition, and a value-empty corner cell then collapses the
    # kernel row of any holdout point inside it.
    "xi": 0.85,
    "rounds_B": 301,
    "freeze_after": 40,
    "max_depth": 9,
    "split_rule": "median",
    "workers": 1,
}


def _spread_subset(X: np.ndarray, m: int, seed: int) -> np.ndarray:
    """Greedy farthest-point subset: holdout points packed too closely
    give the difference covariance near-duplicate rows, whose contrast
    directions blow up the statistic."""
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, X.shape[0]))
    chosen = [start]
    dist = np.linalg.norm(X - X[start], axis=1)
    for _ in range(m - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(X - X[nxt], axis=1))
    return np.sort(np.asarray(chosen))


def _vi_holdout(cfg, w, rep):
    """Spread holdout points, kept away from the boundary in the
    signal-bearing first two features: one-sided cells at the edges carry
    smoothing bias an order larger than the interior, which fat-tails the
    null. The tested third feature stays unrestricted."""
    pool, _ = gen_vi(cfg["holdout_pool"], cfg["sigma"], w, cfg["seed"] + 500_000 + rep)
    lo, hi = cfg["interior_margin"], 1.0 - cfg["interior_margin"]
    interior = np.nonzero(
        (pool.features[:, 0] >= lo) & (pool.features[:, 0] <= hi)
        & (pool.features[:, 1] >= lo) & (pool.features[:, 1] <= hi)
    )[0]
    pool = pool.take(interior)
    return pool.take(_spread_subset(pool.features, cfg["m_holdout"], cfg["seed"] + rep))


def _vi_rep(args):
    cfg, n, w, rep = args
    full, _ = gen_vi(n, cfg["sigma"], w, cfg["seed"] + 1000 + rep)
    holdout = _vi_holdout(cfg, w, rep)
    calib, _ = gen_vi(cfg["calib_n"], cfg["sigma"], w, cfg["seed"] + 700_000 + rep)
    params = BoostParams(
        algo="brat_d", lam=cfg["lam"], dropout_p=cfg["dropout_p"],
        subsample_xi=cfg["xi"], rounds_B=cfg["rounds_B"],
        freeze_after=cfg["freeze_after"],
        tree=TreeParams(max_depth=cfg["max_depth"], split_rule=cfg["split_rule"]),
        seed=cfg["seed"] + rep,
    )
    reference = train(full, params)
    sigma_hat = estimate_sigma(reference, calib).sigma_hat
    res = variable_importance_test(full, [0, 1], holdout, params, cfg["alpha"],
                                   sigma_hat=sigma_hat)
    return (w, n, rep, res.statistic, res.dof, res.p_value, int(res.reject))


def run_vi_power(cfg: dict | None, out_dir: str) -> dict:
    cfg = _merge(VI_POWER_DEFAULTS, cfg)
    os.makedirs(out_dir, exist_ok=True)
    jobs = [(cfg, n, w, rep)
            for n in cfg["n_list"] for w in cfg["w_list"] for rep in range(cfg["reps"])]
    rows = _run_reps(_vi_rep, jobs, cfg["workers"])
    write_csv(os.path.join(out_dir, "vi_power.csv"),
              ["w", "n", "rep", "statistic", "dof", "p_value", "reject"], rows)
    summary = {"alpha": cfg["alpha"], "reps": cfg["reps"], "cells": []}
    for n in cfg["n_list"]:
        for w in cfg["w_list"]:
            rej = [r[6] for r in rows if r[1] == n and r[0] == w]
            summary["cells"].append({
                "n": n, "w": w,
                "rejection_rate": float(np.mean(rej)),
            })
    write_summary(out_dir, summary)
    return summary


# ---------------------------------------------------------------------------
# signal-recovery: constant-signal levels for all three algorithms

SIGNAL_DEFAULTS = {
    "n": 64,
    "level": 3.0,
    "lam": 1.0,
    "dropout_p": 0.5,
    "K": 3,
    "xi": 1.0,
    "rounds_B": 2000,
    "seed": 3,
}


def run_signal_recovery(cfg: dict | None, out_dir: str) -> dict:
    cfg = _merge(SIGNAL_DEFAULTS, cfg)
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg["seed"])
    ds = Dataset(rng.random((cfg["n"], 1)), np.full(cfg["n"], cfg["level"]))
    rows = []
    summary = {"level": cfg["level"], "algos": {}}
    specs = {
        "boulevard": dict(dropout_p=0.0, K=1),
        "brat_d": dict(dropout_p=cfg["dropout_p"], K=1),
        "brat_p": dict(dropout_p=0.0, K=cfg["K"]),
    }
    for algo, extra in specs.items():
        params = BoostParams(
            algo=algo, lam=cfg["lam"], dropout_p=extra["dropout_p"],
            subsample_xi=cfg["xi"], rounds_B=cfg["rounds_B"],
            trees_per_round_K=extra["K"],
            tree=TreeParams(max_depth=2), seed=cfg["seed"],
        )
        traj = []

        def record(b, yhat, _traj=traj):
            _traj.append(float(yhat.mean()))

        model = train(ds, params, round_callback=record)
        for b, v in enumerate(traj, start=1):
            rows.append((algo, b, v))
        raw = float(model.predict(ds.features, rescaled=False).mean())
        rescaled = float(model.predict(ds.features, rescaled=True).mean())
        q = params.q
        if algo == "brat_p":
            raw_target = cfg["level"]
        else:
            raw_target = cfg["level"] * params.lam / (1.0 + params.lam * q)
        summary["algos"][algo] = {
            "raw_mean": raw,
            "rescaled_mean": rescaled,
            "raw_target": raw_target,
            "rescaled_target": cfg["level"],
        }
    write_csv(os.path.join(out_dir, "signal_recovery.csv"),
              ["algo", "round", "raw_mean"], rows)
    write_summary(out_dir, summary)
    return summary


# ---------------------------------------------------------------------------
# mse-race: test error against ensemble size, internal algorithms only

MSE_RACE_DEFAULTS = {
    "n_train": 600,
    "n_test": 300,
    "sigma": 1.0,
    "seed": 17,
    "lam": 0.8,
    "dropout_p": 0.3,
    "xi": 0.8,
    "rounds_B": 151,
    "K": 4,
    "max_depth": 4,
    "checkpoint_every": 10,
}


def run_mse_race(cfg: dict | None, out_dir: str) -> dict:
    cfg = _merge(MSE_RACE_DEFAULTS, cfg)
    os.makedirs(out_dir, exist_ok=True)
    ds = gen_friedman(cfg["n_train"], cfg["sigma"], cfg["seed"])
    test = gen_friedman(cfg["n_test"], cfg["sigma"], cfg["seed"] + 1)
    rows = []
    summary = {"algos": {}}
    specs = {
        "brat_d": dict(algo="brat_d", dropout_p=cfg["dropout_p"], K=1, rule="greedy_variance"),
        "boulevard": dict(algo="boulevard", dropout_p=0.0, K=1, rule="greedy_variance"),
        "brat_p": dict(algo="brat_p", dropout_p=0.0, K=cfg["K"], rule="median"),
    }
    for name, sp in specs.items():
        params = BoostParams(
            algo=sp["algo"], lam=cfg["lam"], dropout_p=sp["dropout_p"],
            subsample_xi=cfg["xi"], rounds_B=cfg["rounds_B"],
            trees_per_round_K=sp["K"],
            tree=TreeParams(max_depth=cfg["max_depth"], split_rule=sp["rule"]),
            seed=cfg["seed"],
        )
        model = train(ds, params)
        rescale = model.rescale
        acc = np.zeros(test.n)
        count = 0
        if sp["algo"] == "brat_p":
            for b, row in enumerate(model.trees, start=1):
                for t in row:
                    acc += t.predict(test.features)
                count += len(row)
                if b % max(1, cfg["checkpoint_every"] // cfg["K"]) == 0 or b == len(model.trees):
                    pred = acc / b
                    mse = float(np.mean((test.response - pred) ** 2))
                    rows.append((name, count, mse))
        else:
            lam = params.lam
            for b, t in enumerate(model.trees, start=1):
                acc += t.predict(test.features)
                count += 1
                if b % cfg["checkpoint_every"] == 0 or b == len(model.trees):
                    pred = rescale * lam * acc / b
                    mse = float(np.mean((test.response - pred) ** 2))
                    rows.append((name, count, mse))
        summary["algos"][name] = {"final_mse": rows[-1][2], "trees": rows[-1][1]}
    write_csv(os.path.join(out_dir, "mse_race.csv"), ["algo", "trees", "test_mse"], rows)
    write_summary(out_dir, summary)
    return summary


SCENARIOS = {
    "fixed-point": run_fixed_point,
    "normality": run_normality,
    "coverage": run_coverage,
    "vi-power": run_vi_power,
    "signal-recovery": run_signal_recovery,
    "mse-race": run_mse_race,
}
