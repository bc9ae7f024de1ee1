import csv
import hashlib
import subprocess
import sys

import pytest

from bratplots.curves import plot_curves
from bratplots.intervals_1d import plot_intervals_1d
from bratplots.qq import plot_qq
from bratplots.raincloud import plot_raincloud
from bratplots.vi_curves import plot_vi_curves


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def _sha(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture
def interval_files(tmp_path):
    import math

    iv_rows = []
    tr_rows = []
    for i in range(30):
        x = i / 29
        f = math.sin(6.28 * x)
        tr_rows.append((i, x, f))
        for kind, w in (("ci", 0.2), ("pi", 0.5), ("ri", 0.28)):
            iv_rows.append((i, f + 0.05, f + 0.05 - w, f + 0.05 + w, kind, 0.1, 1.0))
    iv = _write(tmp_path / "intervals.csv",
                ["point_id", "prediction", "lower", "upper", "kind", "alpha", "gamma"], iv_rows)
    tr = _write(tmp_path / "truth.csv", ["point_id", "x", "f"], tr_rows)
    return iv, tr


@pytest.fixture
def coverage_file(tmp_path):
    rows = []
    for rep in range(6):
        for pid in range(15):
            for kind in ("ci", "pi", "ri"):
                covered = int((rep * 7 + pid * 3 + len(kind)) % 10 > 1)
                width = 0.5 + 0.01 * pid + (0.2 if kind == "pi" else 0.0)
                rows.append((rep, pid, kind, covered, width, 0.0, 0.1, 0.1, 1.0))
    return _write(tmp_path / "coverage.csv",
                  ["rep", "point_id", "kind", "covered", "width", "center", "target",
                   "alpha", "gamma"], rows)


class TestIntervals1d:
    def test_renders_three_bands(self, interval_files, tmp_path):
        iv, tr = interval_files
        out = str(tmp_path / "bands.png")
        plot_intervals_1d(iv, tr, out)
        assert open(out, "rb").read()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_single_kind_renders(self, tmp_path):
        iv = _write(tmp_path / "iv.csv",
                    ["point_id", "prediction", "lower", "upper", "kind", "alpha", "gamma"],
                    [(0, 0.0, -1.0, 1.0, "ci", 0.1, 1.0), (1, 0.5, -0.5, 1.5, "ci", 0.1, 1.0)])
        tr = _write(tmp_path / "tr.csv", ["point_id", "x", "f"], [(0, 0.0, 0.0), (1, 1.0, 0.4)])
        out = str(tmp_path / "one.png")
        plot_intervals_1d(iv, tr, out)
        assert open(out, "rb").read()[:4] == b"\x89PNG"[:4]

    def test_empty_csv_errors(self, tmp_path):
        iv = tmp_path / "iv.csv"
        iv.write_text("point_id,prediction,lower,upper,kind,alpha,gamma\n")
        tr = _write(tmp_path / "tr.csv", ["point_id", "x", "f"], [(0, 0.0, 0.0)])
        with pytest.raises(SystemExit):
            plot_intervals_1d(str(iv), tr, str(tmp_path / "x.png"))

    def test_missing_column_errors(self, tmp_path):
        iv = _write(tmp_path / "iv.csv", ["point_id", "prediction", "kind"],
                    [(0, 0.0, "ci")])
        tr = _write(tmp_path / "tr.csv", ["point_id", "x", "f"], [(0, 0.0, 0.0)])
        with pytest.raises(SystemExit):
            plot_intervals_1d(iv, tr, str(tmp_path / "x.png"))

    def test_deterministic_hash(self, interval_files, tmp_path):
        iv, tr = interval_files
        a = str(tmp_path / "a.png")
        b = str(tmp_path / "b.png")
        plot_intervals_1d(iv, tr, a)
        plot_intervals_1d(iv, tr, b)
        assert _sha(a) == _sha(b)


class TestRaincloud:
    def test_renders(self, coverage_file, tmp_path):
        out = str(tmp_path / "rc.png")
        plot_raincloud(coverage_file, out)
        assert open(out, "rb").read()[:4] == b"\x89PNG"[:4]

    def test_single_rep_degenerate_renders(self, tmp_path):
        rows = [(0, pid, "pi", 1, 0.4, 0.0, 0.1, 0.1, 1.0) for pid in range(5)]
        path = _write(tmp_path / "cov.csv",
                      ["rep", "point_id", "kind", "covered", "width", "center",
                       "target", "alpha", "gamma"], rows)
        out = str(tmp_path / "rc1.png")
        plot_raincloud(path, out)
        assert open(out, "rb").read()[:4] == b"\x89PNG"[:4]

    def test_missing_width_errors(self, tmp_path):
        path = _write(tmp_path / "cov.csv", ["rep", "point_id", "kind", "covered"],
                      [(0, 0, "pi", 1)])
        with pytest.raises(SystemExit):
            plot_raincloud(path, str(tmp_path / "x.png"))

    def test_deterministic_hash(self, coverage_file, tmp_path):
        a = str(tmp_path / "a.png")
        b = str(tmp_path / "b.png")
        plot_raincloud(coverage_file, a)
        plot_raincloud(coverage_file, b)
        assert _sha(a) == _sha(b)


class TestQq:
    def test_standard_normal_near_diagonal(self, tmp_path):
        import numpy as np

        rng = np.random.default_rng(1)
        z = rng.standard_normal(400)
        path = _write(tmp_path / "norm.csv", ["rep", "std_error"],
                      [(i, float(v)) for i, v in enumerate(z)])
        out = str(tmp_path / "qq.png")
        plot_qq(path, out)
        assert open(out, "rb").read()[:4] == b"\x89PNG"[:4]

    def test_constant_input_renders(self, tmp_path):
        path = _write(tmp_path / "c.csv", ["rep", "std_error"],
                      [(i, 0.7) for i in range(20)])
        out = str(tmp_path / "qqc.png")
        plot_qq(path, out)
        assert open(out, "rb").read()[:4] == b"\x89PNG"[:4]

    def test_empty_errors(self, tmp_path):
        path = tmp_path / "e.csv"
        path.write_text("rep,std_error\n")
        with pytest.raises(SystemExit):
            plot_qq(str(path), str(tmp_path / "x.png"))


class TestCurves:
    def test_grouped_curves(self, tmp_path):
        rows = []
        for algo in ("a", "b"):
            for t in range(1, 20):
                rows.append((algo, t, 1.0 / t + (0.2 if algo == "b" else 0.0)))
        path = _write(tmp_path / "race.csv", ["algo", "trees", "test_mse"], rows)
        out = str(tmp_path / "race.png")
        plot_curves(path, out, x="trees", y="test_mse", group="algo")
        assert open(out, "rb").read()[:4] == b"\x89PNG"[:4]

    def test_ungrouped_log_scale(self, tmp_path):
        rows = [(t, 10.0 / t) for t in range(1, 50)]
        path = _write(tmp_path / "gap.csv", ["round", "sup_gap"], rows)
        out = str(tmp_path / "gap.png")
        plot_curves(path, out, x="round", y="sup_gap", logy=True)
        assert open(out, "rb").read()[:4] == b"\x89PNG"[:4]

    def test_log_scale_rejects_nonpositive(self, tmp_path):
        path = _write(tmp_path / "bad.csv", ["round", "sup_gap"], [(1, 0.0), (2, 1.0)])
        with pytest.raises(SystemExit):
            plot_curves(path, str(tmp_path / "x.png"), x="round", y="sup_gap", logy=True)


class TestViCurves:
    def test_renders_size_and_power_lines(self, tmp_path):
        rows = []
        for w in (0.0, 2.0):
            for n in (200, 500, 1000):
                for rep in range(10):
                    rows.append((w, n, rep, 1.0, 10, 0.5, int(w > 0 and rep < 8)))
        path = _write(tmp_path / "vi.csv",
                      ["w", "n", "rep", "statistic", "dof", "p_value", "reject"], rows)
        out = str(tmp_path / "vi.png")
        plot_vi_curves(path, out)
        assert open(out, "rb").read()[:4] == b"\x89PNG"[:4]


class TestCliEntrypoints:
    def test_qq_script_runs(self, tmp_path):
        path = _write(tmp_path / "n.csv", ["rep", "std_error"],
                      [(i, (i % 7 - 3) / 2.0) for i in range(40)])
        out = str(tmp_path / "qq.png")
        proc = subprocess.run(
            [sys.executable, "-m", "bratplots.qq", "--normality", path, "--out", out],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert open(out, "rb").read()[:4] == b"\x89PNG"[:4]
