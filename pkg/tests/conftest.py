"""Shared fixtures for the icl_ts_lab test suite."""

from __future__ import annotations

import numpy as np
import pytest

from icl_ts_lab.data.encoding import TimeSeries


@pytest.fixture(autouse=True)
def _isolate_env(monkeypatch, tmp_path):
    """Keep tests away from a real .env, output directory and thread settings."""
    monkeypatch.setattr("icl_ts_lab.core.config.settings.output_dir", str(tmp_path / "runs"))
    monkeypatch.setattr("icl_ts_lab.core.config.settings.threads", 2)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture()
def geometric():
    """x_t = 2^t, the running example of the least-squares oracles."""
    return TimeSeries.univariate([1.0, 2.0, 4.0, 8.0])


@pytest.fixture()
def small_series(rng):
    return TimeSeries(rng.standard_normal((3, 12)))
