"""Scratch-row bookkeeping for the explicit constructions.

The constructions write into the zero scratch rows between the value row and
the index rows of an encoding:

    lag      q_max rows          per-block history rows (row m holds x_{t-m})
    feat     d_max*q_max rows    stacked features, slot j*q_max + (r-1) = x^j_{t-r}
    gated    d_max*q_max rows    features kept only on training columns
    query    d_max*q_max rows    features kept only on the query column
    weights  d_max*q_max rows    GD iterate, identical in every column
    label    1 row               labels kept only on training columns
    off_train, off_query         0/1 rows, 0 exactly on training / query columns
    resid, var                   MLE residuals and variance slot
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from icl_ts_lab.core.errors import CapacityError, LagError, LayoutError
from icl_ts_lab.core.numerics import Matrix
from icl_ts_lab.data.encoding import EncodingLayout

SECTIONS = ("lag", "feat", "gated", "query", "weights", "label", "off_train", "off_query", "resid", "var")


@dataclass(frozen=True, slots=True)
class IclLayout:
    enc: EncodingLayout
    q_max: int
    d_max: int
    q: int

    def __post_init__(self) -> None:
        if self.q_max < 0 or self.d_max < 1:
            raise LayoutError(f"need q_max >= 0 and d_max >= 1, got {self.q_max}, {self.d_max}")
        if not 0 <= self.q <= self.q_max:
            raise LagError(f"lag q={self.q} must be within [0, q_max={self.q_max}]")
        if self.q_max >= self.enc.T and self.q_max > 0:
            raise LagError(f"q_max={self.q_max} must be < T={self.enc.T}")
        if self.enc.d > self.d_max:
            raise LayoutError(f"series has d={self.enc.d} variates, construction supports d_max={self.d_max}")

    @classmethod
    def for_encoding(cls, enc: EncodingLayout, q_max: int, d_max: int | None = None, q: int | None = None) -> IclLayout:
        return cls(enc=enc, q_max=q_max, d_max=enc.d if d_max is None else d_max, q=q_max if q is None else q)

    # -- sizes --------------------------------------------------------------

    @property
    def n_feat(self) -> int:
        return self.d_max * self.q_max

    @property
    def n_train(self) -> int:
        """Training windows t = q .. T-2."""
        return max(self.enc.T - 1 - self.q, 0)

    def _sizes(self) -> dict[str, int]:
        f = self.n_feat
        return {
            "lag": self.q_max,
            "feat": f,
            "gated": f,
            "query": f,
            "weights": f,
            "label": 1,
            "off_train": 1,
            "off_query": 1,
            "resid": 1,
            "var": 1,
        }

    def section(self, name: str) -> range:
        start = 1
        for key, size in self._sizes().items():
            if key == name:
                return range(start, start + size)
            start += size
        raise LayoutError(f"unknown layout section {name!r}")

    def row(self, name: str) -> int:
        rows = self.section(name)
        if len(rows) != 1:
            raise LayoutError(f"section {name!r} spans {len(rows)} rows")
        return rows[0]

    def feat_slot(self, j: int, r: int) -> int:
        """Offset of variate j, lag r (1-based) inside a feature section."""
        return j * self.q_max + (r - 1)

    # -- capacity -----------------------------------------------------------

    def required_dim(self, upto: str = "var") -> int:
        last = self.section(upto)
        return last.stop + self.enc.t_slots + self.enc.tail

    def require(self, upto: str, inequality: str) -> None:
        need = self.required_dim(upto)
        if self.enc.D < need:
            raise CapacityError(inequality, required=need, available=self.enc.D)

    # -- index helpers ------------------------------------------------------

    @property
    def time_rows(self) -> list[int]:
        """Time rows actually carrying a 1 (t < T)."""
        return [self.enc.time_row(t) for t in range(self.enc.T)]

    def train_times(self) -> range:
        return range(self.q, self.enc.T - 1)

    def unit(self, row: int, col: int) -> Matrix:
        m = np.zeros((self.enc.D, self.enc.D))
        m[row, col] = 1.0
        return m

    def zeros(self) -> Matrix:
        return np.zeros((self.enc.D, self.enc.D))


def preload_weights(H: Matrix, layout: IclLayout, w: np.ndarray) -> Matrix:
    """Write a compact (d*q) weight vector into the weight rows of every column."""
    w = np.asarray(w, dtype=np.float64)
    d, q = layout.enc.d, layout.q
    if w.shape != (d * q,):
        raise LayoutError(f"weights have shape {w.shape}, expected ({d * q},)")
    out = H.copy()
    rows = layout.section("weights")
    for j in range(d):
        for r in range(1, q + 1):
            out[rows[layout.feat_slot(j, r)]] = w[j * q + r - 1]
    return out


def read_weights(H: Matrix, layout: IclLayout, col: int | None = None) -> np.ndarray:
    """Compact weight vector stored in a column (the target column by default)."""
    col = layout.enc.target_col if col is None else col
    rows = layout.section("weights")
    d, q = layout.enc.d, layout.q
    return np.array([H[rows[layout.feat_slot(j, r)], col] for j in range(d) for r in range(1, q + 1)])
