"""Token matrices for uni-variate and any-variate series.

Row layout of H (D x N, N = d*T, columns ordered variate-major then time):

    row 0                      value row (target x_{T-1} of variate 0 masked to 0)
    rows 1 .. time_start-1     zero scratch rows, owned by the constructions
    t_slots rows               time one-hot p_t (t < T carries a 1)
    d_slots rows               variate one-hot e_j   (any-variate)
    2 rows                     constant 1, indicator 1{t < T-1}   (uni-variate)

Index rows sit at the bottom so that a model trained with fixed ``t_slots`` and
``d_slots`` sees the same rows for every lookback and variate count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike

from icl_ts_lab.core.errors import CapacityError, LagError, LayoutError
from icl_ts_lab.core.numerics import Matrix, as_matrix
from icl_ts_lab.core.serialization import read_table, write_table
from icl_ts_lab.model.layers import BlockMask, build_block_mask

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class TimeSeries:
    """d x T grid; variate 0 is the prediction target."""

    values: Matrix

    def __post_init__(self) -> None:
        values = as_matrix(self.values)
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise LayoutError(f"series needs d >= 1 and T >= 1, got shape {values.shape}")
        if not np.isfinite(values).all():
            raise LayoutError("series contains non-finite values")
        object.__setattr__(self, "values", values)

    @classmethod
    def univariate(cls, xs: ArrayLike) -> TimeSeries:
        return cls(np.asarray(xs, dtype=np.float64).reshape(1, -1))

    @property
    def d(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def target(self) -> np.ndarray:
        return self.values[0]

    def window(self, start: int, stop: int) -> TimeSeries:
        return TimeSeries(self.values[:, start:stop])

    def to_frame(self) -> pd.DataFrame:
        d, T = self.values.shape
        return pd.DataFrame(
            {
                "variate": np.repeat(np.arange(d), T),
                "t": np.tile(np.arange(T), d),
                "value": self.values.ravel(),
            }
        )

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> TimeSeries:
        missing = {"variate", "t", "value"} - set(df.columns)
        if missing:
            raise LayoutError(f"series table lacks columns {sorted(missing)}")
        grid = df.pivot(index="variate", columns="t", values="value").sort_index().sort_index(axis=1)
        if grid.isna().any().any():
            raise LayoutError("series table is not a full d x T grid")
        return cls(grid.to_numpy(dtype=np.float64))


def write_series_csv(series: TimeSeries, path: Path) -> Path:
    return write_table(series.to_frame(), path)


def read_series_csv(path: Path) -> TimeSeries:
    return TimeSeries.from_frame(read_table(path))


@dataclass(frozen=True, slots=True)
class EncodingLayout:
    d: int
    T: int
    D: int
    t_slots: int
    d_slots: int
    univariate: bool = False
    masked: bool = True
    value_row: int = 0

    @property
    def n_tokens(self) -> int:
        return self.d * self.T

    @property
    def tail(self) -> int:
        return 2 if self.univariate else self.d_slots

    @property
    def time_start(self) -> int:
        return self.D - self.t_slots - self.tail

    @property
    def time_rows(self) -> range:
        return range(self.time_start, self.time_start + self.t_slots)

    @property
    def variate_rows(self) -> range:
        stop = self.D - 1 if self.univariate else self.D
        return range(self.time_start + self.t_slots, stop)

    @property
    def indicator_row(self) -> int | None:
        return self.D - 1 if self.univariate else None

    @property
    def scratch_rows(self) -> range:
        return range(1, self.time_start)

    @property
    def target_col(self) -> int:
        return self.T - 1

    def time_row(self, t: int) -> int:
        if not 0 <= t < self.t_slots:
            raise LayoutError(f"time {t} outside {self.t_slots} time slots")
        return self.time_start + t

    def variate_row(self, j: int) -> int:
        """Row of variate one-hot j; the constant-1 row for uni-variate layouts."""
        rows = self.variate_rows
        if not 0 <= j < len(rows):
            raise LayoutError(f"variate {j} outside {len(rows)} variate slots")
        return rows[j]

    def column(self, variate: int, t: int) -> int:
        return variate * self.T + t

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "T": self.T,
            "D": self.D,
            "t_slots": self.t_slots,
            "d_slots": self.d_slots,
            "univariate": self.univariate,
            "masked": self.masked,
            "value_row": self.value_row,
            "time_rows": [self.time_rows.start, self.time_rows.stop],
            "variate_rows": [self.variate_rows.start, self.variate_rows.stop],
            "indicator_row": self.indicator_row,
            "target_col": self.target_col,
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> EncodingLayout:
        keys = ("d", "T", "D", "t_slots", "d_slots", "univariate", "masked")
        return cls(**{k: obj[k] for k in keys})

    @classmethod
    def anyvariate(
        cls, d: int, T: int, D: int, *, t_slots: int | None = None, d_slots: int | None = None, masked: bool = True
    ) -> EncodingLayout:
        t_slots = T if t_slots is None else t_slots
        d_slots = d if d_slots is None else d_slots
        if t_slots < T or d_slots < d:
            raise CapacityError(
                f"t_slots >= T and d_slots >= d (t_slots={t_slots}, T={T}, d_slots={d_slots}, d={d})",
                required=1 + T + d,
                available=D,
            )
        if D < 1 + t_slots + d_slots:
            raise CapacityError("D >= 1 + T + d", required=1 + t_slots + d_slots, available=D)
        return cls(d=d, T=T, D=D, t_slots=t_slots, d_slots=d_slots, masked=masked)

    @classmethod
    def uni(cls, T: int, D: int, *, t_slots: int | None = None, masked: bool = True) -> EncodingLayout:
        t_slots = T if t_slots is None else t_slots
        if t_slots < T:
            raise CapacityError("t_slots >= T", required=T + 3, available=D)
        if D < 3 + t_slots:
            raise CapacityError("D >= T + 3", required=3 + t_slots, available=D)
        return cls(d=1, T=T, D=D, t_slots=t_slots, d_slots=1, univariate=True, masked=masked)


@dataclass(frozen=True, slots=True)
class EncodedInput:
    H: Matrix
    layout: EncodingLayout
    mask: BlockMask = field(repr=False)
    label: float = 0.0  # true value behind the masked target slot

    def with_H(self, H: Matrix) -> EncodedInput:
        return replace(self, H=as_matrix(H))


def _fill(series: TimeSeries, layout: EncodingLayout) -> EncodedInput:
    d, T = series.d, series.T
    H = np.zeros((layout.D, layout.n_tokens))
    H[layout.value_row] = series.values.ravel()
    label = float(series.values[0, T - 1])
    if layout.masked:
        H[layout.value_row, layout.target_col] = 0.0

    cols = np.arange(layout.n_tokens)
    H[layout.time_start + cols % T, cols] = 1.0
    if layout.univariate:
        H[layout.variate_row(0)] = 1.0
        H[layout.indicator_row, : T - 1] = 1.0
    else:
        H[layout.time_start + layout.t_slots + cols // T, cols] = 1.0

    return EncodedInput(H=H, layout=layout, mask=build_block_mask(d * T, T), label=label)


def encode_anyvariate(
    series: TimeSeries,
    D: int,
    *,
    t_slots: int | None = None,
    d_slots: int | None = None,
    mask_target: bool = True,
) -> EncodedInput:
    """Flatten a d x T series into one value row plus time/variate one-hot rows."""
    layout = EncodingLayout.anyvariate(series.d, series.T, D, t_slots=t_slots, d_slots=d_slots, masked=mask_target)
    return _fill(series, layout)


def encode_univariate(
    series: TimeSeries, D: int, *, t_slots: int | None = None, mask_target: bool = True
) -> EncodedInput:
    """Single-variate encoding with a constant row and the 1{t < T-1} query indicator."""
    if series.d != 1:
        raise LayoutError(f"uni-variate encoding needs d = 1, got d = {series.d}")
    return _fill(series, EncodingLayout.uni(series.T, D, t_slots=t_slots, masked=mask_target))


def read_y(enc: EncodedInput, H_out: Matrix) -> float:
    layout = enc.layout
    if H_out.shape != (layout.D, layout.n_tokens):
        raise LayoutError(f"output shape {H_out.shape} does not match layout {(layout.D, layout.n_tokens)}")
    return float(H_out[layout.value_row, layout.target_col])


def decode_values(enc: EncodedInput, H: Matrix | None = None, *, unmask: bool = True) -> TimeSeries:
    """Recover the d x T series from the value row, restoring the masked target."""
    H = enc.H if H is None else H
    values = np.array(H[enc.layout.value_row], dtype=np.float64).reshape(enc.layout.d, enc.layout.T)
    if unmask and enc.layout.masked:
        values[0, enc.layout.T - 1] = enc.label
    return TimeSeries(values)


@dataclass(frozen=True, slots=True)
class HistoryMatrix:
    A: Matrix  # (q+1) x T
    variate: int
    q: int


def history_matrix(series: TimeSeries, variate: int, q: int) -> HistoryMatrix:
    """Row r holds the series rotated right by r (periodic negative index)."""
    if q >= series.T:
        raise LagError(f"lag q={q} must be < T={series.T}")
    if q < 0:
        raise LagError(f"lag q={q} must be >= 0")
    x = series.values[variate]
    return HistoryMatrix(A=np.stack([np.roll(x, r) for r in range(q + 1)]), variate=variate, q=q)
