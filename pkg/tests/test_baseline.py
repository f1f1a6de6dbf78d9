"""Tests for the least-squares oracles."""

from __future__ import annotations

import numpy as np
import pytest

from icl_ts_lab.baseline import (
    build_regression_dataset,
    gram_beta,
    gram_spectrum,
    loss_reg,
    ls_closed_form,
    ls_gd,
    nll_variance,
    predict,
    split_last,
)
from icl_ts_lab.core.errors import DimensionError, DivergenceError, InvalidStep, LagError
from icl_ts_lab.data.encoding import TimeSeries


class TestRegressionDataset:
    def test_geometric_windows(self, geometric):
        data = build_regression_dataset(geometric, 1)
        np.testing.assert_array_equal(data.X, [[1.0], [2.0], [4.0]])
        np.testing.assert_array_equal(data.y, [2.0, 4.0, 8.0])

    def test_feature_order(self):
        series = TimeSeries(np.array([[1.0, 2.0, 3.0, 4.0], [10.0, 20.0, 30.0, 40.0]]))
        data = build_regression_dataset(series, 2)
        # variate-major, lag 1 first
        np.testing.assert_array_equal(data.X, [[2.0, 1.0, 20.0, 10.0], [3.0, 2.0, 30.0, 20.0]])
        np.testing.assert_array_equal(data.y, [3.0, 4.0])

    @pytest.mark.parametrize("q", [0, 4])
    def test_lag_range(self, geometric, q):
        with pytest.raises(LagError):
            build_regression_dataset(geometric, q)

    def test_split_last(self, geometric):
        train, phi, y = split_last(build_regression_dataset(geometric, 1))
        assert train.n == 2
        np.testing.assert_array_equal(phi, [4.0])
        assert y == 8.0


class TestOracles:
    def test_one_gd_step(self, geometric):
        train, _, _ = split_last(build_regression_dataset(geometric, 1))
        trace = ls_gd(train, None, 0.1, 1)
        assert trace.final[0] == pytest.approx(0.5)
        assert len(trace.iterates) == 2

    def test_zero_steps_return_w0(self, geometric):
        train, _, _ = split_last(build_regression_dataset(geometric, 1))
        np.testing.assert_array_equal(ls_gd(train, [0.3], 0.1, 0).final, [0.3])

    def test_gd_converges_to_closed_form(self, rng):
        series = TimeSeries(rng.standard_normal((2, 60)))
        train, _, _ = split_last(build_regression_dataset(series, 2))
        w = ls_closed_form(train)
        trace = ls_gd(train, None, 1.0 / gram_beta(train), 2000)
        np.testing.assert_allclose(trace.final, w, atol=1e-6)
        assert loss_reg(train, w) <= loss_reg(train, trace.iterates[10]) + 1e-12

    def test_gd_divergence(self, geometric):
        train, _, _ = split_last(build_regression_dataset(geometric, 1))
        with pytest.raises(DivergenceError):
            ls_gd(train, None, 10.0, 50)

    def test_gd_step_positive(self, geometric):
        train, _, _ = split_last(build_regression_dataset(geometric, 1))
        with pytest.raises(InvalidStep):
            ls_gd(train, None, 0.0, 1)

    def test_gd_w0_shape(self, geometric):
        train, _, _ = split_last(build_regression_dataset(geometric, 1))
        with pytest.raises(DimensionError):
            ls_gd(train, [0.0, 0.0], 0.1, 1)

    def test_closed_form_exact_fit(self, geometric):
        train, _, _ = split_last(build_regression_dataset(geometric, 1))
        np.testing.assert_allclose(ls_closed_form(train), [2.0])
        assert nll_variance(train, np.array([2.0])) == 0.0

    def test_closed_form_min_norm_on_singular_gram(self):
        series = TimeSeries(np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]))
        train = build_regression_dataset(series, 1)
        w = ls_closed_form(train)
        # duplicated features share the weight equally
        assert w[0] == pytest.approx(w[1])

    def test_ridge(self, geometric):
        train, _, _ = split_last(build_regression_dataset(geometric, 1))
        # (gram + ridge) w = X^T y / n  ->  (2.5 + 2.5) w = 5
        np.testing.assert_allclose(ls_closed_form(train, ridge=2.5), [1.0])
        with pytest.raises(ValueError):
            ls_closed_form(train, ridge=-1.0)

    def test_variance_zero_weights(self):
        train, _, _ = split_last(build_regression_dataset(TimeSeries.univariate([1.0, 1.0, -1.0, 5.0]), 1))
        assert nll_variance(train, np.zeros(1)) == 1.0

    def test_spectrum(self, small_series):
        train, _, _ = split_last(build_regression_dataset(small_series, 2))
        alpha, beta = gram_spectrum(train)
        eig = np.linalg.eigvalsh(train.gram())
        assert alpha == pytest.approx(eig[0])
        assert beta == pytest.approx(eig[-1])

    def test_predict(self):
        assert predict([1.0, 2.0], [3.0, 4.0]) == 11.0
        with pytest.raises(DimensionError):
            predict([1.0], [1.0, 2.0])

    def test_trace_frame(self, geometric):
        train, _, _ = split_last(build_regression_dataset(geometric, 1))
        df = ls_gd(train, None, 0.1, 3).to_frame(w_ref=np.array([2.0]))
        assert list(df.columns) == ["iter", "loss", "dist"]
        assert df["dist"].is_monotonic_decreasing
