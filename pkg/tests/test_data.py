import numpy as np
import pytest

from brat.data import (
    Dataset,
    SplitSpec,
    friedman_mean,
    gen_friedman,
    gen_sine_quadratic,
    gen_vi,
    load_csv,
    minmax_scale,
    sine_quadratic_mean,
    split,
    vi_mean_full,
    vi_mean_reduced,
)
from brat.errors import ConfigError, DataError


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


class TestLoadCsv:
    def test_minmax_endpoints(self, tmp_path):
        path = _write(tmp_path, "a,y\n0,1\n10,2\n")
        ds = load_csv(path, target="y")
        np.testing.assert_allclose(ds.features[:, 0], [0.0, 1.0])
        np.testing.assert_allclose(ds.response, [1.0, 2.0])

    def test_constant_column_maps_to_half(self, tmp_path):
        path = _write(tmp_path, "a,y\n3,1\n3,2\n")
        ds = load_csv(path, target="y")
        np.testing.assert_allclose(ds.features[:, 0], [0.5, 0.5])

    def test_missing_target_names_column(self, tmp_path):
        path = _write(tmp_path, "a,b\n1,2\n")
        with pytest.raises(DataError, match="'y'"):
            load_csv(path, target="y")

    def test_non_numeric_cell_reports_location(self, tmp_path):
        path = _write(tmp_path, "a,y\n1,2\nfoo,3\n")
        with pytest.raises(DataError, match="row 3.*'a'"):
            load_csv(path, target="y")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot open"):
            load_csv(str(tmp_path / "nope.csv"), target="y")

    def test_unscaled_load(self, tmp_path):
        path = _write(tmp_path, "a,y\n0,1\n10,2\n")
        ds = load_csv(path, target="y", scale=False)
        np.testing.assert_allclose(ds.features[:, 0], [0.0, 10.0])


class TestSplit:
    def test_sizes_and_determinism(self):
        ds = gen_friedman(10, 0.0, 1)
        spec = SplitSpec(0.6, 0.2, 0.2, seed=7)
        tr, ca, te = split(ds, spec)
        assert (tr.n, ca.n, te.n) == (6, 2, 2)
        tr2, ca2, te2 = split(ds, spec)
        np.testing.assert_array_equal(tr.features, tr2.features)
        np.testing.assert_array_equal(te.response, te2.response)

    def test_partition_is_exact(self):
        ds = gen_friedman(23, 0.5, 3)
        tr, ca, te = split(ds, SplitSpec(0.5, 0.25, 0.25, seed=11))
        stacked = np.vstack([tr.features, ca.features, te.features])
        assert stacked.shape[0] == ds.n
        key = np.lexsort(stacked.T)
        key0 = np.lexsort(ds.features.T)
        np.testing.assert_array_equal(stacked[key], ds.features[key0])

    def test_three_rows(self):
        ds = gen_friedman(3, 0.0, 1)
        tr, ca, te = split(ds, SplitSpec(1 / 3, 1 / 3, 1 / 3, seed=0))
        assert (tr.n, ca.n, te.n) == (1, 1, 1)

    def test_two_rows_rejected(self):
        ds = gen_friedman(2, 0.0, 1)
        with pytest.raises(DataError):
            split(ds, SplitSpec(1 / 3, 1 / 3, 1 / 3, seed=0))

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            SplitSpec(0.5, 0.5, 0.5)
        with pytest.raises(ConfigError):
            SplitSpec(1.0, 0.0, 0.0, seed=1)


class TestGenerators:
    def test_sine_quadratic_values(self):
        # oracle: direct evaluation of sin(2 pi x) + x^2 / 2
        assert sine_quadratic_mean(np.array([0.25]))[0] == pytest.approx(1.03125, abs=1e-12)
        assert sine_quadratic_mean(np.array([0.0]))[0] == pytest.approx(0.0, abs=1e-12)
        assert sine_quadratic_mean(np.array([1.0]))[0] == pytest.approx(0.5, abs=1e-12)

    def test_friedman_values(self):
        x = np.array([[0.5, 0.5, 0.5, 0.9, 0.0],
                      [0.0, 0.3, 0.5, 0.1, 0.0],
                      [0.5, 1.0, 1.0, 0.2, 1.0]])
        expect = [10.0 * np.sin(np.pi * 0.25) - 10.0, -10.0, 10.0]
        np.testing.assert_allclose(friedman_mean(x), expect, atol=1e-12)

    def test_vi_values(self):
        x = np.array([[0.5, 1.0, 1.0], [1.0, 0.0, 0.7]])
        np.testing.assert_allclose(vi_mean_full(x, 2.0), [3.0, 5.4], atol=1e-12)
        np.testing.assert_allclose(vi_mean_full(x, 0.0), [1.0, 4.0], atol=1e-12)
        np.testing.assert_allclose(vi_mean_reduced(x), [1.0, 4.0], atol=1e-12)

    def test_noiseless_matches_mean_on_grid(self):
        ds = gen_sine_quadratic(100, 0.0, 5)
        np.testing.assert_allclose(ds.response, sine_quadratic_mean(ds.features[:, 0]), atol=1e-12)
        df = gen_friedman(100, 0.0, 5)
        np.testing.assert_allclose(df.response, friedman_mean(df.features), atol=1e-12)
        full, red = gen_vi(100, 0.0, 1.5, 5)
        np.testing.assert_allclose(full.response, vi_mean_full(full.features, 1.5), atol=1e-12)
        np.testing.assert_allclose(red.response, vi_mean_reduced(full.features), atol=1e-12)

    def test_reproducible(self):
        a = gen_friedman(50, 1.0, 42)
        b = gen_friedman(50, 1.0, 42)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.response, b.response)

    def test_vi_null_case_identical(self):
        full, red = gen_vi(40, 0.0, 0.0, 9)
        np.testing.assert_array_equal(full.response, red.response)
        np.testing.assert_array_equal(full.features[:, :2], red.features)

    def test_features_in_unit_cube(self):
        ds = gen_friedman(200, 2.0, 0)
        assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0

    def test_bad_args(self):
        with pytest.raises(ConfigError):
            gen_sine_quadratic(0, 0.1, 1)
        with pytest.raises(ConfigError):
            gen_friedman(10, -0.1, 1)
        with pytest.raises(ConfigError):
            gen_vi(10, 0.1, -1.0, 1)


class TestDataset:
    def test_rejects_nonfinite(self):
        with pytest.raises(DataError):
            Dataset(np.array([[np.nan]]), np.array([1.0]))
        with pytest.raises(DataError):
            Dataset(np.array([[1.0]]), np.array([np.inf]))

    def test_restrict_and_take(self):
        ds = gen_friedman(10, 0.0, 1)
        sub = ds.take([0, 2, 4]).restrict([1, 3])
        assert sub.features.shape == (3, 2)
        assert sub.column_names == ("x2", "x4")

    def test_minmax_scale_bounds(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 4)) * 10
        S = minmax_scale(X)
        assert S.min() >= 0.0 and S.max() <= 1.0
