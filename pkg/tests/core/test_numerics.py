"""Tests for the dense kernels and the power-iteration spectral norm."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg as sla

from icl_ts_lab.core.errors import ConvergenceError, DimensionError, DivergenceError, InvalidBound
from icl_ts_lab.core.numerics import (
    as_matrix,
    clip,
    col2inf_norm,
    matmul,
    relu,
    spectral_norm,
    spectral_norm_or_bound,
)


class TestKernels:
    def test_as_matrix_vector_is_row(self):
        assert as_matrix([1.0, 2.0]).shape == (1, 2)

    def test_as_matrix_rejects_3d(self):
        with pytest.raises(DimensionError):
            as_matrix(np.zeros((2, 2, 2)))

    def test_matmul_matches_triple_loop(self, rng):
        a = rng.integers(-5, 6, size=(4, 3)).astype(float)
        b = rng.integers(-5, 6, size=(3, 5)).astype(float)
        expected = np.zeros((4, 5))
        for i in range(4):
            for j in range(5):
                for k in range(3):
                    expected[i, j] += a[i, k] * b[k, j]
        np.testing.assert_array_equal(matmul(a, b), expected)

    def test_matmul_associative(self, rng):
        a, b, c = rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (3, 6)), rng.uniform(-1, 1, (6, 2))
        np.testing.assert_allclose(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), rtol=0, atol=1e-12)

    def test_matmul_shape_mismatch(self):
        with pytest.raises(DimensionError):
            matmul(np.eye(2), np.ones((3, 1)))

    def test_matmul_overflow(self):
        with pytest.raises(DivergenceError), np.errstate(over="ignore"):
            matmul([[1e200]], [[1e200]])

    def test_relu(self):
        np.testing.assert_array_equal(relu([[-1.0, 0.0, 2.0]]), [[0.0, 0.0, 2.0]])

    def test_clip(self):
        np.testing.assert_array_equal(clip([[-3.0, 0.5, 3.0]], 1.0), [[-1.0, 0.5, 1.0]])

    def test_clip_idempotent(self, rng):
        m = rng.standard_normal((5, 7)) * 3
        once = clip(m, 1.5)
        np.testing.assert_array_equal(clip(once, 1.5), once)
        assert np.abs(once).max() <= 1.5

    @pytest.mark.parametrize("bound", [0.0, -1.0])
    def test_clip_invalid_bound(self, bound):
        with pytest.raises(InvalidBound):
            clip([[1.0]], bound)

    def test_col2inf_norm(self):
        assert col2inf_norm([[3.0, 0.0], [4.0, 1.0]]) == pytest.approx(5.0)


class TestSpectralNorm:
    def test_matches_svd(self, rng):
        for _ in range(20):
            a = rng.standard_normal((6, 4))
            assert spectral_norm(a) == pytest.approx(sla.svdvals(a)[0], rel=1e-6)

    def test_bounds_every_stretch(self, rng):
        a = rng.standard_normal((5, 8))
        norm = spectral_norm(a)
        for _ in range(10):
            v = rng.standard_normal(8)
            assert norm >= np.linalg.norm(a @ v) / np.linalg.norm(v) * (1 - 1e-9)

    def test_zero_matrix(self):
        assert spectral_norm(np.zeros((3, 3))) == 0.0

    def test_diagonal(self):
        assert spectral_norm(np.diag([1.0, -5.0, 2.0])) == pytest.approx(5.0)

    def test_all_ones_in_null_space(self):
        # [[1, -1]] annihilates the all-ones start vector
        assert spectral_norm([[1.0, -1.0]]) == pytest.approx(np.sqrt(2.0))

    def test_no_convergence_raises_with_estimate(self):
        a = np.diag([1.0, 0.999999])
        with pytest.raises(ConvergenceError) as info:
            spectral_norm(a, tol=1e-15, max_iter=2)
        assert info.value.estimate == pytest.approx(np.linalg.norm(a))

    def test_fallback_flags_estimate(self, monkeypatch):
        monkeypatch.setattr("icl_ts_lab.core.numerics.settings.power_max_iter", 1)
        monkeypatch.setattr("icl_ts_lab.core.numerics.settings.power_tol", 1e-16)
        value, exact = spectral_norm_or_bound(np.diag([1.0, 0.999999]))
        assert not exact
        assert value == pytest.approx(np.sqrt(1.0 + 0.999999**2))
