"""Acceptance suite: one test per criterion, each printing a PASS line
with the measured quantities. Run with `pytest tests/test_acceptance.py -v -s`.

The simulation-backed criteria call the same scenario harnesses the CLI
exposes, at their default (criterion) scales, so the numbers here match
`brat sim` outputs for identical configs.
"""

import hashlib
import json
import time

import numpy as np
import pytest

import brat
from brat.boost import BoostParams, fixed_point_oracle, train
from brat.data import Dataset, gen_friedman, gen_sine_quadratic
from brat.infer import confidence_interval
from brat.kernel import (
    estimate_K_matrix,
    k_batch,
    nystrom_build,
    sketched_predict,
    sketched_r_norm,
)
from brat.scenarios import (
    run_coverage,
    run_fixed_point,
    run_normality,
    run_signal_recovery,
    run_vi_power,
)
from brat.stats import normal_quantile
from brat.trees import TreeParams


def _report(num, name, detail):
    print(f"\nACCEPTANCE {num} {name}: PASS ({detail})")


class TestCriterion1FixedPoint:
    def test_fixed_point_convergence(self, tmp_path):
        summary = run_fixed_point(None, str(tmp_path / "fp"))
        tol = summary["tolerance"]
        details = []
        for algo in ("brat_d", "brat_p"):
            s = summary["algos"][algo]
            gap_early = s["checkpoint_gaps"]["2000"]
            gap_final = s["checkpoint_gaps"]["20000"]
            assert gap_final <= tol, f"{algo} final gap {gap_final} > {tol}"
            assert gap_final <= gap_early, f"{algo} gap grew: {gap_early} -> {gap_final}"
            assert s["train_seconds"] <= 120.0, f"{algo} took {s['train_seconds']:.0f}s"
            details.append(f"{algo}: gap@2000={gap_early:.4f} gap@20000={gap_final:.4f} "
                           f"tol={tol:.4f} {s['train_seconds']:.0f}s")
        _report(1, "fixed-point convergence", "; ".join(details))


class TestCriterion2SignalRecovery:
    def test_constant_signal_levels(self, tmp_path):
        summary = run_signal_recovery(None, str(tmp_path / "sr"))
        a = summary["algos"]
        assert abs(a["boulevard"]["raw_mean"] - 1.5) <= 0.05
        assert abs(a["boulevard"]["rescaled_mean"] - 3.0) <= 0.1
        assert abs(a["brat_d"]["raw_mean"] - 2.0) <= 0.05
        assert abs(a["brat_d"]["rescaled_mean"] - 3.0) <= 0.1
        assert abs(a["brat_p"]["raw_mean"] - 3.0) <= 0.1
        _report(2, "signal recovery",
                f"boulevard raw {a['boulevard']['raw_mean']:.4f}->1.5, "
                f"brat_d raw {a['brat_d']['raw_mean']:.4f}->2.0, "
                f"brat_p raw {a['brat_p']['raw_mean']:.4f}->3.0")


class TestCriterion3WeightSums:
    def test_weight_sum_identities(self):
        n = 250
        ds = gen_friedman(n, 1.0, 31)
        test = gen_friedman(50, 1.0, 97)
        lam, q = 0.8, 0.7
        p_d = BoostParams(algo="brat_d", lam=lam, dropout_p=1 - q, subsample_xi=0.8,
                          rounds_B=101, tree=TreeParams(max_depth=4), seed=31)
        m_d = train(ds, p_d)
        sums_d = estimate_K_matrix(m_d).solver().weights_many(
            k_batch(m_d, test.features)).sum(axis=1)
        frac_d = np.mean(np.abs(sums_d - lam / (1 + lam * q)) <= 5 / n)
        assert frac_d >= 0.95, f"dropout weight sums off: {frac_d:.2%} within 5/n"

        p_p = BoostParams(algo="brat_p", lam=1.0, subsample_xi=0.8, rounds_B=101,
                          trees_per_round_K=3,
                          tree=TreeParams(max_depth=4, split_rule="median"), seed=31)
        m_p = train(ds, p_p)
        sums_p = estimate_K_matrix(m_p).solver().weights_many(
            k_batch(m_p, test.features)).sum(axis=1)
        frac_p = np.mean(np.abs(sums_p - 1.0) <= 5 / n)
        assert frac_p >= 0.95, f"parallel weight sums off: {frac_p:.2%} within 5/n"
        _report(3, "weight-sum identities",
                f"brat_d {frac_d:.0%} within 5/n of {lam/(1+lam*q):.4f}; "
                f"brat_p {frac_p:.0%} within 5/n of 1")


class TestCriterion4Coverage:
    def test_calibrated_pi_coverage(self, tmp_path):
        t0 = time.perf_counter()
        summary = run_coverage(None, str(tmp_path / "cov"))
        elapsed = time.perf_counter() - t0
        pi_cov = summary["kinds"]["pi"]["marginal_coverage"]
        ci_cov = summary["kinds"]["ci"]["marginal_coverage"]
        assert 0.85 <= pi_cov <= 0.95, f"calibrated PI coverage {pi_cov:.3f} outside [0.85, 0.95]"
        assert elapsed <= 1200.0, f"coverage harness took {elapsed:.0f}s"
        _report(4, "coverage",
                f"calibrated PI marginal coverage {pi_cov:.3f}; "
                f"uncalibrated CI coverage {ci_cov:.3f} (informational); {elapsed:.0f}s")


class TestCriterion5Normality:
    def test_standardized_errors_normal(self, tmp_path):
        summary = run_normality(None, str(tmp_path / "norm"))
        assert summary["reps"] == 200
        assert summary["ks_pvalue"] > 0.01, (
            f"KS rejected: stat={summary['ks_stat']:.3f} p={summary['ks_pvalue']:.4f}")
        _report(5, "normality",
                f"KS stat {summary['ks_stat']:.3f}, p {summary['ks_pvalue']:.3f}, "
                f"mean {summary['mean']:.3f}, sd {summary['sd']:.3f}")


class TestCriterion6ViSizePower:
    def test_size_and_power(self, tmp_path):
        t0 = time.perf_counter()
        summary = run_vi_power(None, str(tmp_path / "vi"))
        elapsed = time.perf_counter() - t0
        cells = {(c["w"], c["n"]): c["rejection_rate"] for c in summary["cells"]}
        size = cells[(0.0, 1000)]
        power = cells[(2.0, 1000)]
        assert size <= 0.12, f"size {size:.3f} > 0.12"
        assert power >= 0.8, f"power {power:.3f} < 0.8"
        assert elapsed <= 900.0, f"vi harness took {elapsed:.0f}s"
        _report(6, "variable-importance size/power",
                f"size {size:.3f} (<= 0.12), power {power:.3f} (>= 0.8), {elapsed:.0f}s")


class TestCriterion7Nystrom:
    def test_sketch_fidelity_and_time(self):
        ds = gen_friedman(500, 1.0, 5)
        y = ds.response
        params = BoostParams(algo="brat_d", lam=0.8, dropout_p=0.3, subsample_xi=0.8,
                             rounds_B=151, tree=TreeParams(max_depth=4), seed=5)
        model = train(ds, params)
        ke = estimate_K_matrix(model)
        test = gen_friedman(100, 1.0, 99)
        rows = k_batch(model, test.features)
        R = ke.solver().weights_many(rows)
        exact_pred = R @ y
        exact_norm = np.linalg.norm(R, axis=1)

        full = nystrom_build(ke, 500, "uniform", y, seed=1)
        kt = full.ktilde(test.features)
        preds = np.array([sketched_predict(full, kt[i]) for i in range(100)])
        norms = np.array([sketched_r_norm(full, kt[i]) for i in range(100)])
        pred_err = np.max(np.abs(preds - exact_pred) / np.maximum(np.abs(exact_pred), 1e-12))
        norm_err = np.max(np.abs(norms - exact_norm) / exact_norm)
        assert pred_err <= 1e-6, f"full-sketch prediction error {pred_err:.2e}"
        assert norm_err <= 1e-6, f"full-sketch norm error {norm_err:.2e}"

        rec = nystrom_build(ke, 100, "recursive", y, seed=1)
        kt_r = rec.ktilde(test.features)
        norms_r = np.array([sketched_r_norm(rec, kt_r[i]) for i in range(100)])
        med_err = float(np.median(np.abs(norms_r - exact_norm) / exact_norm))
        assert med_err <= 0.15, f"recursive s=100 median norm error {med_err:.3f} > 0.15"

        # per-query cost at fixed s must not grow with n
        def per_point_seconds(n_train):
            d = gen_friedman(n_train, 1.0, 6)
            mdl = train(d, BoostParams(algo="brat_d", lam=0.8, dropout_p=0.3,
                                       subsample_xi=0.8, rounds_B=151,
                                       tree=TreeParams(max_depth=4), seed=6))
            k_est = estimate_K_matrix(mdl)
            sk = nystrom_build(k_est, 100, "uniform", d.response, seed=2)
            Xq = test.features
            best = np.inf
            for _ in range(3):
                t0 = time.perf_counter()
                ktq = sk.ktilde(Xq)
                for i in range(Xq.shape[0]):
                    sketched_r_norm(sk, ktq[i])
                best = min(best, (time.perf_counter() - t0) / Xq.shape[0])
            return best

        t_small = per_point_seconds(500)
        t_large = per_point_seconds(2000)
        ratio = t_large / t_small
        assert ratio <= 1.5, f"sketched per-point time grew with n: ratio {ratio:.2f}"
        _report(7, "sketch fidelity",
                f"s=n errors pred {pred_err:.1e} / norm {norm_err:.1e}; "
                f"recursive s=100 median err {med_err:.3f}; time ratio {ratio:.2f}")


class TestCriterion8AnalyticInterval:
    def test_single_leaf_closed_form(self):
        n = 64
        rng = np.random.default_rng(0)
        ds = Dataset(rng.random((n, 1)), np.sin(rng.random(n)))
        target = normal_quantile(0.975) / np.sqrt(n)
        details = []
        for algo, kw in (("brat_d", dict(lam=0.8, dropout_p=0.3)),
                         ("brat_p", dict(lam=1.0, trees_per_round_K=3))):
            params = BoostParams(algo=algo, subsample_xi=1.0, rounds_B=30,
                                 tree=TreeParams(max_depth=0), seed=1, **kw)
            model = train(ds, params)
            ke = estimate_K_matrix(model)
            iv = confidence_interval(model, ke, ds.features[0], alpha=0.05, sigma_hat=1.0)
            assert abs(iv.half_width - target) <= 1e-6, (
                f"{algo} half-width {iv.half_width} != {target}")
            details.append(f"{algo} {iv.half_width:.7f}")
        _report(8, "analytic single-leaf interval",
                f"target {target:.7f}; " + ", ".join(details))


class TestCriterion9Equivalences:
    def test_boulevard_is_brat_d_without_dropout(self):
        ds = gen_sine_quadratic(120, 0.3, 8)
        kw = dict(lam=0.7, subsample_xi=0.8, rounds_B=60,
                  tree=TreeParams(max_depth=3), seed=21)
        mb = train(ds, BoostParams(algo="boulevard", dropout_p=0.0, **kw))
        md = train(ds, BoostParams(algo="brat_d", dropout_p=0.0, **kw))
        tb = json.dumps([t.to_dict() for t in mb.trees], sort_keys=True)
        td = json.dumps([t.to_dict() for t in md.trees], sort_keys=True)
        assert tb == td
        assert mb.rescale == md.rescale

    def test_parallel_k1_is_kernel_average(self):
        ds = gen_sine_quadratic(150, 0.3, 9)
        params = BoostParams(algo="brat_p", lam=1.0, subsample_xi=0.8, rounds_B=400,
                             trees_per_round_K=1,
                             tree=TreeParams(max_depth=3, split_rule="median"), seed=3)
        model = train(ds, params)
        ke = estimate_K_matrix(model)
        gap = np.max(np.abs(model.predict(ds.features) - ke.Khat @ ds.response))
        assert gap <= 1e-8, f"K=1 training predictions differ from kernel action by {gap:.2e}"
        _report(9, "equivalences",
                f"boulevard == brat_d(p=0) bit-identical; K=1 kernel-average gap {gap:.1e}")


class TestCriterion10PlotScripts:
    def test_render_all_five_kinds(self, tmp_path):
        bratplots = pytest.importorskip(
            "bratplots", reason="secondary plots package not installed")
        from bratplots.curves import plot_curves
        from bratplots.intervals_1d import plot_intervals_1d
        from bratplots.qq import plot_qq
        from bratplots.raincloud import plot_raincloud
        from bratplots.vi_curves import plot_vi_curves

        fp = run_fixed_point({"n": 60, "rounds_B": 400, "freeze_after": 10,
                              "checkpoints": [100, 400], "algos": ["brat_d"],
                              "demo_rounds_B": 40}, str(tmp_path / "fp"))
        cov = run_coverage({"reps": 3, "n_train": 120, "n_calib": 60, "n_test": 20,
                            "rounds_B": 20}, str(tmp_path / "cov"))
        nrm = run_normality({"reps": 8, "n": 80, "rounds_B": 20, "calib_n": 40,
                             "min_leaf": 2, "max_depth": 4}, str(tmp_path / "norm"))
        vip = run_vi_power({"reps": 2, "n_list": [150], "rounds_B": 40,
                            "freeze_after": 10, "m_holdout": 5, "holdout_pool": 40,
                            "calib_n": 40, "max_depth": 4}, str(tmp_path / "vi"))

        jobs = [
            (plot_intervals_1d,
             (str(tmp_path / "fp" / "intervals_1d.csv"), str(tmp_path / "fp" / "truth_1d.csv"),
              str(tmp_path / "bands.png"))),
            (plot_curves,
             (str(tmp_path / "fp" / "fixed_point_brat_d.csv"), str(tmp_path / "gap.png"),
              "round", "sup_gap")),
            (plot_raincloud,
             (str(tmp_path / "cov" / "coverage.csv"), str(tmp_path / "cloud.png"))),
            (plot_qq,
             (str(tmp_path / "norm" / "normality.csv"), str(tmp_path / "qq.png"))),
            (plot_vi_curves,
             (str(tmp_path / "vi" / "vi_power.csv"), str(tmp_path / "vi.png"))),
        ]
        hashes = {}
        for fn, args in jobs:
            fn(*args)
            out = args[2] if fn is plot_intervals_1d else args[1]
            data = open(out, "rb").read()
            assert data[:8] == b"\x89PNG\r\n\x1a\n"
            # re-render into a sibling file: identical bytes
            again = out.replace(".png", "_again.png")
            fn(*[a if not (isinstance(a, str) and a == out) else again for a in args])
            assert hashlib.sha256(data).hexdigest() == hashlib.sha256(
                open(again, "rb").read()).hexdigest()
            hashes[out.rsplit("/", 1)[-1]] = hashlib.sha256(data).hexdigest()[:8]
        _report(10, "plot scripts", f"five kinds rendered deterministically: {hashes}")
