"""Least-squares oracles the constructed transformers are checked against.

Windows: for t = q .. T-1 the feature row is
``[x^0_{t-1} .. x^0_{t-q}, x^1_{t-1} .. x^1_{t-q}, ...]`` (variate-major, then lag)
and the label is ``x^0_t``. The last window is the query; the rest train.

L_reg(w) = 1/n sum_t 1/2 (<w, phi_t> - y_t)^2 uses the realized sample count n.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg as sla
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import ArrayLike

from icl_ts_lab.core.errors import DimensionError, DivergenceError, InvalidStep, LagError
from icl_ts_lab.data.encoding import TimeSeries

logger = logging.getLogger(__name__)

EIG_CUTOFF = 1e-12


@dataclass(frozen=True, slots=True)
class RegressionData:
    X: np.ndarray  # n x (q d)
    y: np.ndarray  # n
    q: int
    d: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def gram(self) -> np.ndarray:
        return self.X.T @ self.X / max(self.n, 1)


def build_regression_dataset(series: TimeSeries, q: int) -> RegressionData:
    if not 1 <= q < series.T:
        raise LagError(f"lag q={q} must satisfy 1 <= q < T={series.T}")
    # windows[j, s] = x^j_{s .. s+q-1}; reverse so column 0 is lag 1
    windows = sliding_window_view(series.values[:, :-1], q, axis=1)[:, :, ::-1]
    X = np.ascontiguousarray(windows.transpose(1, 0, 2).reshape(series.T - q, series.d * q))
    return RegressionData(X=X, y=series.values[0, q:].copy(), q=q, d=series.d)


def split_last(data: RegressionData) -> tuple[RegressionData, np.ndarray, float]:
    """Training rows, query features and query target."""
    train = RegressionData(X=data.X[:-1], y=data.y[:-1], q=data.q, d=data.d)
    return train, data.X[-1].copy(), float(data.y[-1])


def gram_spectrum(data: RegressionData) -> tuple[float, float]:
    """(alpha, beta): smallest non-negligible and largest eigenvalue of the Gram."""
    if data.n == 0:
        return 0.0, 0.0
    eig = sla.eigh(data.gram(), eigvals_only=True)
    beta = float(eig[-1])
    if beta <= 0:
        return 0.0, 0.0
    kept = eig[eig > EIG_CUTOFF * beta]
    return float(kept[0]), beta


def gram_beta(data: RegressionData) -> float:
    """Largest Gram eigenvalue; eta = 1/beta is the default GD step."""
    return gram_spectrum(data)[1]


def loss_reg(data: RegressionData, w: np.ndarray) -> float:
    r = data.X @ w - data.y
    return 0.5 * float(r @ r) / max(data.n, 1)


@dataclass(slots=True)
class GdTrace:
    iterates: list[np.ndarray] = field(default_factory=list)
    eta: float = 0.0
    losses: list[float] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    def to_frame(self, w_ref: np.ndarray | None = None) -> pd.DataFrame:
        df = pd.DataFrame({"iter": np.arange(len(self.losses)), "loss": self.losses})
        if w_ref is not None:
            df["dist"] = [float(np.linalg.norm(w - w_ref)) for w in self.iterates]
        return df


def ls_gd(data: RegressionData, w0: ArrayLike | None, eta: float, steps: int) -> GdTrace:
    """Full-batch gradient descent on L_reg."""
    if not eta > 0:
        raise InvalidStep(f"step size must be > 0, got {eta}")
    w = np.zeros(data.X.shape[1]) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    if w.shape != (data.X.shape[1],):
        raise DimensionError(f"w0 has shape {w.shape}, features have {data.X.shape[1]} columns")
    n = max(data.n, 1)
    trace = GdTrace(iterates=[w.copy()], eta=eta, losses=[loss_reg(data, w)])
    limit = 10 * trace.losses[0]
    for step in range(1, steps + 1):
        w = w - eta * (data.X.T @ (data.X @ w - data.y)) / n
        loss = loss_reg(data, w)
        if not np.isfinite(loss) or (loss > limit and loss > 0):
            raise DivergenceError(f"GD loss rose to {loss:.3g} (initial {trace.losses[0]:.3g})", step=step)
        trace.iterates.append(w.copy())
        trace.losses.append(loss)
    return trace


def ls_closed_form(data: RegressionData, ridge: float = 0.0) -> np.ndarray:
    """argmin L_reg + ridge/2 |w|^2, minimum-norm when the Gram is singular."""
    if ridge < 0:
        raise ValueError(f"ridge must be >= 0, got {ridge}")
    p = data.X.shape[1]
    if data.n == 0:
        return np.zeros(p)
    evals, evecs = sla.eigh(data.gram())
    rhs = evecs.T @ (data.X.T @ data.y / data.n)
    shifted = evals + ridge
    top = max(float(shifted.max()), 0.0)
    keep = shifted > EIG_CUTOFF * top if top > 0 else np.zeros_like(shifted, dtype=bool)
    coef = np.zeros(p)
    coef[keep] = rhs[keep] / shifted[keep]
    return evecs @ coef


def nll_variance(data: RegressionData, w: np.ndarray) -> float:
    """Mean squared residual, the Gaussian MLE of the noise variance."""
    if data.n == 0:
        return 0.0
    r = data.X @ w - data.y
    return float(r @ r) / data.n


def predict(w: ArrayLike, window: ArrayLike) -> float:
    w, window = np.asarray(w, dtype=np.float64), np.asarray(window, dtype=np.float64)
    if w.shape != window.shape:
        raise DimensionError(f"weights {w.shape} vs window {window.shape}")
    return float(w @ window)
