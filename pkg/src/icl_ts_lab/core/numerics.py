"""Dense f64 kernels shared by every other module.

Matrices are plain ``numpy`` arrays of dtype float64 in C (row-major) order; the
helpers here enforce that contract and the "always finite" invariant.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from numpy.typing import ArrayLike, NDArray

from icl_ts_lab.core.config import settings
from icl_ts_lab.core.errors import ConvergenceError, DimensionError, DivergenceError, InvalidBound

logger = logging.getLogger(__name__)

type Matrix = NDArray[np.float64]


def as_matrix(x: ArrayLike) -> Matrix:
    """Coerce to a 2-D row-major float64 array (vectors become one row)."""
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got {m.ndim}-d array")
    return m


def _finite(m: Matrix, op: str) -> Matrix:
    if not np.isfinite(m).all():
        raise DivergenceError(f"{op} produced non-finite entries")
    return m


def matmul(a: ArrayLike, b: ArrayLike) -> Matrix:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: {a.shape} x {b.shape}")
    return _finite(a @ b, "matmul")


def relu(m: ArrayLike) -> Matrix:
    return np.maximum(as_matrix(m), 0.0)


def clip(m: ArrayLike, bound: float) -> Matrix:
    """Entrywise Clip_B(t) = max(min(t, B), -B)."""
    if not bound > 0:
        raise InvalidBound(f"clip bound must be > 0, got {bound}")
    return np.clip(as_matrix(m), -bound, bound)


def col2inf_norm(m: ArrayLike) -> float:
    """Largest Euclidean column norm, the (2, inf) norm of H."""
    m = as_matrix(m)
    if m.size == 0:
        return 0.0
    return float(np.sqrt((m * m).sum(axis=0)).max())


def spectral_norm(m: ArrayLike, tol: float | None = None, max_iter: int | None = None) -> float:
    """Largest singular value by power iteration on A^T A.

    Starts from the normalized all-ones vector. If that vector lies in the null
    space of A, restarts from the dominant column of A^T A. Raises
    ConvergenceError (carrying the Frobenius bound) when the relative change of
    the estimate stays above ``tol`` for ``max_iter`` rounds.
    """
    tol = settings.power_tol if tol is None else tol
    max_iter = settings.power_max_iter if max_iter is None else max_iter
    if not tol > 0:
        raise ValueError("tol must be > 0")
    a = as_matrix(m)
    fro = float(np.linalg.norm(a))
    if fro == 0.0:
        return 0.0

    v = np.ones(a.shape[1]) / math.sqrt(a.shape[1])
    if np.linalg.norm(a @ v) <= 1e-14 * fro:
        gram = a.T @ a
        v = gram[:, int(np.argmax(np.linalg.norm(gram, axis=0)))].copy()
        v /= np.linalg.norm(v)

    sigma = float(np.linalg.norm(a @ v))
    for _ in range(max_iter):
        w = a.T @ (a @ v)
        norm_w = float(np.linalg.norm(w))
        if norm_w == 0.0:
            return 0.0
        v = w / norm_w
        new_sigma = float(np.linalg.norm(a @ v))
        if abs(new_sigma - sigma) <= tol * new_sigma:
            return new_sigma
        sigma = new_sigma

    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        estimate=fro,
        last_iterate=sigma,
    )


def spectral_norm_or_bound(m: ArrayLike) -> tuple[float, bool]:
    """Spectral norm, or the Frobenius upper bound flagged as an estimate."""
    try:
        return spectral_norm(m), True
    except ConvergenceError as exc:
        logger.warning("Spectral norm fell back to Frobenius estimate (%.4g)", exc.estimate)
        return exc.estimate, False
