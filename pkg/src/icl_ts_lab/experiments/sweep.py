"""Lookback sweeps: prediction MSE of each method as the context grows.

One long test series per (d, q, seed) is generated up front; every cell
(method, d, q, lookback, seed) predicts the last value of ``n_positions``
windows of ``lookback + 1`` steps cut from it. The window ends are the same for
every lookback and all lie past the largest one. MSE is reported without the 1/2
factor, so a unit-noise series has floor 1.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy import stats

from icl_ts_lab.baseline import build_regression_dataset, ls_closed_form, ls_gd, split_last
from icl_ts_lab.construct.assemble import instance_spec, run_constructed_icl
from icl_ts_lab.core.errors import VerificationError
from icl_ts_lab.core.workers import WorkerPool
from icl_ts_lab.data.encoding import TimeSeries
from icl_ts_lab.data.synth import gen_test_series
from icl_ts_lab.train.trainer import load_snapshot, position_losses

logger = logging.getLogger(__name__)

Method = Literal["constructed-icl", "ls-gd-50", "ls-gd-100", "ls-closed", "trained-model"]
SWEEP_COLUMNS = ["method", "d", "q", "lookback", "seed", "mse", "error"]
GD_BASELINE_STEP = 0.1


class SweepSpec(BaseModel):
    lookbacks: list[int] = Field(default_factory=lambda: [8, 16, 32, 64, 128, 256, 512])
    methods: list[Method] = Field(default_factory=lambda: ["constructed-icl", "ls-closed"])
    sigma2: float = Field(default=1.0, ge=0)
    d: list[int] = Field(default_factory=lambda: [1])
    q: list[int] = Field(default_factory=lambda: [1])
    seeds: list[int] = Field(default_factory=lambda: [0])
    test_length: int = Field(default=5000, ge=2)
    n_positions: int = Field(default=20, ge=1)
    icl_steps: int = Field(default=100, ge=0)  # GD layers of the constructed transformer
    model_path: Path | None = None
    output: Path | None = None

    @field_validator("lookbacks")
    @classmethod
    def _increasing(cls, v: list[int]) -> list[int]:
        if not v or any(b <= a for a, b in zip(v, v[1:], strict=False)):
            raise ValueError("lookback grid must be non-empty and strictly increasing")
        if v[0] < 2:
            raise ValueError("lookbacks must be >= 2")
        return v

    @field_validator("d", "q", "seeds")
    @classmethod
    def _non_empty(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("need at least one value")
        return v

    @model_validator(mode="after")
    def _resolvable(self) -> SweepSpec:
        if "trained-model" in self.methods and self.model_path is None:
            raise ValueError("method trained-model needs model_path")
        if not self.methods:
            raise ValueError("need at least one method")
        if self.lookbacks[-1] >= self.test_length:
            raise ValueError(f"lookback {self.lookbacks[-1]} does not fit a test series of {self.test_length}")
        return self


class Cell(NamedTuple):
    method: str
    d: int
    q: int
    lookback: int
    seed: int


# -- per-window predictors -------------------------------------------------------------


def _regression(window: TimeSeries, q: int):
    train, phi, y = split_last(build_regression_dataset(window, q))
    return train, phi, y


def predict_ls_closed(window: TimeSeries, q: int) -> float:
    train, phi, _ = _regression(window, q)
    return float(phi @ ls_closed_form(train))


def predict_ls_gd(window: TimeSeries, q: int, steps: int) -> float:
    train, phi, _ = _regression(window, q)
    return float(phi @ ls_gd(train, None, GD_BASELINE_STEP, steps).final)


def predict_constructed(window: TimeSeries, q: int, steps: int) -> float:
    return run_constructed_icl(window, instance_spec(window, q, L2=steps)).prediction


def window_ends(lookback: int, length: int, n_positions: int) -> np.ndarray:
    return np.unique(np.linspace(lookback, length - 1, n_positions).round().astype(int))


# -- sweep ------------------------------------------------------------------------------


class SweepRunner:
    def __init__(self, spec: SweepSpec, threads: int | None = None) -> None:
        self.spec = spec
        self.pool = WorkerPool(threads)
        self._series: dict[tuple[int, int, int], TimeSeries] = {}
        self._model = load_snapshot(spec.model_path) if "trained-model" in spec.methods else None

    def cells(self) -> list[Cell]:
        s = self.spec
        return [
            Cell(m, d, q, lb, seed)
            for m in s.methods
            for d in s.d
            for q in s.q
            for lb in s.lookbacks
            for seed in s.seeds
        ]

    def test_series(self, d: int, q: int, seed: int) -> TimeSeries:
        key = (d, q, seed)
        if key not in self._series:
            _, self._series[key] = gen_test_series(d, q, T=self.spec.test_length, sigma2=self.spec.sigma2, seed=seed)
        return self._series[key]

    def _predictor(self, method: str, q: int) -> Callable[[TimeSeries], float]:
        match method:
            case "ls-closed":
                return lambda w: predict_ls_closed(w, q)
            case "ls-gd-50":
                return lambda w: predict_ls_gd(w, q, 50)
            case "ls-gd-100":
                return lambda w: predict_ls_gd(w, q, 100)
            case "constructed-icl":
                return lambda w: predict_constructed(w, q, self.spec.icl_steps)
        raise ValueError(f"unknown method {method!r}")

    def evaluate(self, cell: Cell) -> float:
        series = self.test_series(cell.d, cell.q, cell.seed)
        # shared by every lookback so cells differ only in context length
        ends = window_ends(self.spec.lookbacks[-1], series.T, self.spec.n_positions)
        if cell.method == "trained-model":
            return self._trained_mse(series, cell.lookback, ends)
        predict = self._predictor(cell.method, cell.q)
        errs = []
        for end in ends:
            window = series.window(int(end) - cell.lookback, int(end) + 1)
            errs.append((predict(window) - float(series.values[0, end])) ** 2)
        return float(np.mean(errs))

    def _trained_mse(self, series: TimeSeries, lookback: int, ends: np.ndarray) -> float:
        params, cfg = self._model
        ctx = min(lookback + 1, cfg.time_slots)
        losses = [
            position_losses(
                params,
                series.window(int(end) - ctx + 1, int(end) + 1),
                cfg.B_x,
                context_length=ctx,
                t_slots=cfg.time_slots,
                d_slots=cfg.d_slots,
            )[-1]
            for end in ends
        ]
        return 2.0 * float(np.mean(losses))

    def run(self) -> pd.DataFrame:
        cells = self.cells()
        for d, q, seed in {(c.d, c.q, c.seed) for c in cells}:
            self.test_series(d, q, seed)  # generate before fanning out
        tasks = self.pool.run(cells, self.evaluate, describe=lambda c: c._asdict())
        rows = []
        for task in tasks:
            row = {**task.key._asdict(), "mse": math.nan, "error": ""}
            if task.ok:
                row["mse"] = task.result
            else:
                row["error"] = f"{task.failure.error_type}: {task.failure.message}"
            rows.append(row)
        if rows and all(r["error"] for r in rows):
            raise VerificationError(f"all {len(rows)} sweep cells failed; first: {rows[0]['error']}")
        df = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
        df = df.sort_values(["method", "d", "q", "lookback", "seed"], kind="stable").reset_index(drop=True)
        logger.info("Sweep done (%s)", WorkerPool.summary(tasks))
        return df


def run_sweep(spec: SweepSpec, threads: int | None = None) -> pd.DataFrame:
    return SweepRunner(spec, threads).run()


def lookback_trend(df: pd.DataFrame) -> pd.DataFrame:
    """Spearman rank correlation of mean MSE against lookback, per (method, d, q).

    Negative values mean the error falls as the context grows.
    """
    rows = []
    for (method, d, q), group in df.dropna(subset=["mse"]).groupby(["method", "d", "q"], sort=True):
        curve = group.groupby("lookback")["mse"].mean()
        rho = float(stats.spearmanr(curve.index, curve.to_numpy()).statistic) if len(curve) > 1 else math.nan
        rows.append({"method": str(method), "d": int(d), "q": int(q), "lookbacks": len(curve), "spearman": rho})
    return pd.DataFrame(rows, columns=["method", "d", "q", "lookbacks", "spearman"])
