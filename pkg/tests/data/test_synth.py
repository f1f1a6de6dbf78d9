"""Tests for AR generation, seasonality and datasets."""

from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from icl_ts_lab.core.errors import DivergenceError, LagError
from icl_ts_lab.data.encoding import TimeSeries
from icl_ts_lab.data.synth import (
    ArParams,
    ArRanges,
    SeasonalitySpec,
    add_seasonality,
    gen_ar,
    gen_dataset,
    gen_test_series,
    read_dataset,
    realized_bx,
    sample_ar_params,
    simulate_ar,
    write_dataset,
)


class TestArParams:
    def test_normalized_scale(self):
        p = ArParams(d=2, q=3, coeffs=np.ones((3, 2)), noise_var=1.0)
        assert p.scale == pytest.approx(1 / 6)
        assert p.w_star.shape == (6,)

    def test_w_star_order(self):
        p = ArParams(d=2, q=2, coeffs=[[1.0, 2.0], [3.0, 4.0]], noise_var=0.0, normalized=False)
        # variate-major then lag
        np.testing.assert_array_equal(p.w_star, [1.0, 3.0, 2.0, 4.0])

    def test_negative_noise(self):
        with pytest.raises(ValueError):
            ArParams(d=1, q=1, coeffs=[[0.5]], noise_var=-1.0)

    def test_zero_lag(self):
        with pytest.raises(LagError):
            ArParams(d=1, q=0, coeffs=np.zeros((0, 1)), noise_var=1.0)

    def test_spectral_radius(self):
        assert ArParams(d=1, q=1, coeffs=[[-0.5]], noise_var=0.0).spectral_radius == pytest.approx(0.5)
        # x_t = x_{t-1} + x_{t-2}: golden ratio
        p = ArParams(d=1, q=2, coeffs=[[1.0], [1.0]], noise_var=0.0, normalized=False)
        assert p.spectral_radius == pytest.approx((1 + 5**0.5) / 2)

    def test_covariates_do_not_move_the_radius(self):
        p = ArParams(d=2, q=1, coeffs=[[0.6, 50.0]], noise_var=0.0, normalized=False)
        assert p.spectral_radius == pytest.approx(0.6)

    def test_dict_round_trip(self):
        p = ArParams(d=1, q=2, coeffs=[[0.5], [0.25]], noise_var=0.3, seed=9, seasonality=SeasonalitySpec(1.5, 12))
        assert ArParams.from_dict(p.to_dict()).to_dict() == p.to_dict()


class TestSimulate:
    def test_noiseless_recursion(self):
        p = ArParams(d=1, q=1, coeffs=[[2.0]], noise_var=0.0)
        series = gen_ar(p, 4, burn_in=0, initial=np.array([1.0]))
        np.testing.assert_array_equal(series.values, [[1.0, 2.0, 4.0, 8.0]])

    def test_noise_closes_the_recursion(self):
        p = ArParams(d=2, q=2, coeffs=[[0.5, 0.2], [-0.3, 0.1]], noise_var=0.5, seed=3)
        sample = simulate_ar(p, 30, burn_in=0)
        x = sample.series.values
        for t in range(2, 30):
            pred = p.w_star @ np.concatenate([x[j, t - 2 : t][::-1] for j in range(2)])
            assert x[0, t] - pred == pytest.approx(sample.noise[t], abs=1e-12)

    def test_deterministic(self):
        p = ArParams(d=2, q=1, coeffs=[[0.3, 0.3]], noise_var=1.0, seed=5)
        np.testing.assert_array_equal(gen_ar(p, 20).values, gen_ar(p, 20).values)

    def test_divergence(self):
        p = ArParams(d=1, q=1, coeffs=[[1e200]], noise_var=0.0)
        with pytest.raises(DivergenceError):
            gen_ar(p, 10, burn_in=0, initial=np.array([1.0]))

    def test_burn_in_discarded(self):
        p = ArParams(d=1, q=1, coeffs=[[0.5]], noise_var=1.0, seed=1)
        assert gen_ar(p, 10, burn_in=50).T == 10


class TestSeasonality:
    def test_adds_sine(self):
        series = add_seasonality(TimeSeries(np.zeros((2, 4))), SeasonalitySpec(2.0, 4))
        np.testing.assert_allclose(series.values, [[0.0, 2.0, 0.0, -2.0]] * 2, atol=1e-12)

    def test_frequency_positive(self):
        with pytest.raises(ValueError):
            SeasonalitySpec(1.0, 0)


class TestRealizedBx:
    def test_window_norm(self):
        assert realized_bx(TimeSeries.univariate([3.0, 4.0, 0.0]), 2) == 5.0

    def test_lag_too_long(self, geometric):
        with pytest.raises(LagError):
            realized_bx(geometric, 4)


class TestRanges:
    def test_rejects_zero_choice(self):
        with pytest.raises(ValidationError):
            ArRanges(d_choices=[0])

    def test_rejects_reversed_noise(self):
        with pytest.raises(ValidationError):
            ArRanges(sigma2_low=2.0, sigma2_high=1.0)


class TestDataset:
    def test_same_seed_same_data(self):
        ranges = ArRanges(d_choices=[1, 2], q_choices=[1, 2])
        a = gen_dataset(4, ranges, 11, 30, burn_in=10)
        b = gen_dataset(4, ranges, 11, 30, burn_in=10)
        for s, t in zip(a.series, b.series, strict=True):
            np.testing.assert_array_equal(s.values, t.values)
        assert a.meta["master_seed"] == 11

    def test_files_round_trip(self, tmp_path):
        ds = gen_dataset(3, ArRanges(d_choices=[2], q_choices=[1]), 0, 15, burn_in=5)
        manifest = write_dataset(ds, tmp_path / "ds")
        back = read_dataset(tmp_path / "ds")
        assert manifest.name == "manifest.json"
        assert len(back) == 3
        np.testing.assert_array_equal(back.series[2].values, ds.series[2].values)
        assert back.params[1].to_dict() == ds.params[1].to_dict()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_dataset(tmp_path)

    def test_test_series_noise(self):
        params, series = gen_test_series(2, 3, T=50, sigma2=0.25, seed=4)
        assert params.noise_var == 0.25
        assert (params.d, params.q, series.T) == (2, 3, 50)

    def test_default_coefficients_are_standard_normal_draws(self):
        params = sample_ar_params(ArRanges(d_choices=[2], q_choices=[3]), np.random.default_rng(5))
        rng = np.random.default_rng(5)
        rng.choice([2])  # d
        rng.choice([3])  # q
        np.testing.assert_array_equal(params.coeffs, rng.standard_normal((3, 2)))

    def test_default_keeps_unstable_draws(self):
        ranges = ArRanges(d_choices=[1], q_choices=[1], normalized=False)
        rng = np.random.default_rng(0)
        radii = [sample_ar_params(ranges, rng).spectral_radius for _ in range(50)]
        assert max(radii) > 1

    def test_rejects_empty_length(self):
        with pytest.raises(ValueError):
            gen_dataset(2, ArRanges(), 0, 0)

    def test_draws_are_stationary(self):
        ds = gen_dataset(20, ArRanges(d_choices=[1], q_choices=[1, 3], stationary=True), 2, 10, burn_in=0)
        assert all(p.spectral_radius < 1 for p in ds.params)

    def test_long_test_series_stays_bounded(self):
        for seed in range(5):
            _, series = gen_test_series(1, 1, T=3000, seed=seed)
            assert np.isfinite(series.values).all()
            assert np.abs(series.values).max() < 1e3
