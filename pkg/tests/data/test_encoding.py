"""Tests for time-series containers, token encodings and history matrices."""

from __future__ import annotations

import numpy as np
import pytest

from icl_ts_lab.core.errors import CapacityError, LagError, LayoutError
from icl_ts_lab.data.encoding import (
    EncodingLayout,
    TimeSeries,
    decode_values,
    encode_anyvariate,
    encode_univariate,
    history_matrix,
    read_series_csv,
    read_y,
    write_series_csv,
)


class TestTimeSeries:
    def test_shape(self, small_series):
        assert (small_series.d, small_series.T) == (3, 12)
        np.testing.assert_array_equal(small_series.target, small_series.values[0])

    def test_rejects_non_finite(self):
        with pytest.raises(LayoutError):
            TimeSeries(np.array([[1.0, np.nan]]))

    def test_window(self, geometric):
        np.testing.assert_array_equal(geometric.window(1, 3).values, [[2.0, 4.0]])

    def test_csv_round_trip(self, tmp_path, small_series):
        back = read_series_csv(write_series_csv(small_series, tmp_path / "s.csv"))
        np.testing.assert_array_equal(back.values, small_series.values)

    def test_incomplete_table(self, small_series):
        df = small_series.to_frame().iloc[1:]
        with pytest.raises(LayoutError):
            TimeSeries.from_frame(df)


class TestAnyVariateEncoding:
    def test_layout(self):
        series = TimeSeries(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
        enc = encode_anyvariate(series, D=6)
        H = enc.H
        np.testing.assert_array_equal(H[0], [1.0, 2.0, 0.0, 4.0, 5.0, 6.0])
        assert enc.label == 3.0
        # time one-hots in rows 1..3, variate one-hots in rows 4..5
        np.testing.assert_array_equal(H[1:4], np.tile(np.eye(3), 2))
        np.testing.assert_array_equal(H[4], [1, 1, 1, 0, 0, 0])
        np.testing.assert_array_equal(H[5], [0, 0, 0, 1, 1, 1])
        assert enc.mask.block_size == 3

    def test_scratch_rows_are_zero(self, small_series):
        enc = encode_anyvariate(small_series, D=40)
        assert not enc.H[enc.layout.scratch_rows].any()

    def test_spare_slots(self, small_series):
        enc = encode_anyvariate(small_series, D=40, t_slots=20, d_slots=5)
        assert enc.layout.time_start == 40 - 25
        assert not enc.H[enc.layout.time_row(15)].any()

    def test_capacity(self, small_series):
        with pytest.raises(CapacityError) as info:
            encode_anyvariate(small_series, D=15)
        assert info.value.required == 16

    def test_unmasked(self, small_series):
        enc = encode_anyvariate(small_series, D=16, mask_target=False)
        assert enc.H[0, 11] == small_series.values[0, 11]

    def test_read_and_decode(self, small_series):
        enc = encode_anyvariate(small_series, D=16)
        H = enc.H.copy()
        H[0, enc.layout.target_col] = 7.5
        assert read_y(enc, H) == 7.5
        np.testing.assert_array_equal(decode_values(enc).values, small_series.values)

    def test_read_y_shape_check(self, small_series):
        enc = encode_anyvariate(small_series, D=16)
        with pytest.raises(LayoutError):
            read_y(enc, enc.H[:, :5])


class TestUnivariateEncoding:
    def test_rows(self, geometric):
        enc = encode_univariate(geometric, D=7)
        H = enc.H
        np.testing.assert_array_equal(H[0], [1.0, 2.0, 4.0, 0.0])
        np.testing.assert_array_equal(H[5], np.ones(4))
        np.testing.assert_array_equal(H[6], [1.0, 1.0, 1.0, 0.0])
        assert enc.layout.indicator_row == 6

    def test_needs_one_variate(self, small_series):
        with pytest.raises(LayoutError):
            encode_univariate(small_series, D=20)

    def test_capacity(self, geometric):
        with pytest.raises(CapacityError):
            encode_univariate(geometric, D=6)

    def test_layout_dict(self):
        layout = EncodingLayout.uni(4, 9)
        assert EncodingLayout.from_dict(layout.to_dict()) == layout


class TestHistoryMatrix:
    def test_periodic_shift(self):
        A = history_matrix(TimeSeries.univariate([1.0, 2.0, 3.0, 4.0]), 0, 2).A
        np.testing.assert_array_equal(A, [[1, 2, 3, 4], [4, 1, 2, 3], [3, 4, 1, 2]])

    def test_per_variate(self, small_series):
        A = history_matrix(small_series, 2, 1).A
        np.testing.assert_array_equal(A[1, 1:], small_series.values[2, :-1])

    @pytest.mark.parametrize("q", [-1, 12])
    def test_lag_range(self, small_series, q):
        with pytest.raises(LagError):
            history_matrix(small_series, 0, q)
