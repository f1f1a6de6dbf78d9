"""Tests for the error hierarchy, exit codes and CellFailure records."""

from __future__ import annotations

import pytest

from icl_ts_lab.core.errors import (
    EXIT_CONFIG,
    EXIT_DIVERGENCE,
    EXIT_VERIFY,
    CapacityError,
    CellFailure,
    ConditionError,
    ConvergenceError,
    DimensionError,
    DivergenceError,
    LabError,
    SizeError,
    VerificationError,
    exit_code_for,
)


class TestExitCodes:
    @pytest.mark.parametrize(
        ("exc", "code"),
        [
            (DimensionError("x"), EXIT_CONFIG),
            (ConditionError("alpha"), EXIT_CONFIG),
            (SizeError("big"), EXIT_CONFIG),
            (DivergenceError("nan", step=3), EXIT_DIVERGENCE),
            (ConvergenceError("slow", estimate=2.0, last_iterate=1.9), EXIT_DIVERGENCE),
            (VerificationError("bad"), EXIT_VERIFY),
            (ValueError("bad flag"), EXIT_CONFIG),
            (FileNotFoundError("gone"), EXIT_CONFIG),
        ],
    )
    def test_mapping(self, exc, code):
        assert exit_code_for(exc) == code

    def test_every_error_is_lab_error(self):
        assert issubclass(CapacityError, LabError)
        assert issubclass(VerificationError, LabError)


class TestErrorPayloads:
    def test_capacity_names_inequality(self):
        exc = CapacityError("D >= T + 3", required=11, available=9)
        assert "D >= T + 3" in str(exc)
        assert exc.required == 11
        assert exc.available == 9

    def test_divergence_series_index(self):
        exc = DivergenceError("non-finite value", step=12, series_index=4)
        assert str(exc).startswith("series 4: ")
        assert exc.step == 12

    def test_convergence_carries_estimates(self):
        exc = ConvergenceError("no", estimate=3.0, last_iterate=2.5)
        assert exc.estimate == 3.0
        assert exc.last_iterate == 2.5


class TestCellFailure:
    def test_from_exception(self):
        rec = CellFailure.from_exception(DivergenceError("loss is nan"), {"method": "ls-gd-50", "lookback": 8})
        assert rec.error_type == "DivergenceError"
        assert "loss is nan" in rec.summary()
        assert "lookback=8" in rec.summary()
