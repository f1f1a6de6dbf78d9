"""Tests for attention, any-variate attention, MLP and the stacked forward pass."""

from __future__ import annotations

import numpy as np
import pytest

from icl_ts_lab.construct.layout import IclLayout
from icl_ts_lab.construct.reformat import build_groupwise_shift, build_stack_layer
from icl_ts_lab.core.errors import DimensionError, InvalidBound, LayoutError
from icl_ts_lab.data.encoding import TimeSeries, encode_anyvariate
from icl_ts_lab.model.layers import (
    AttnHead,
    AttnLayer,
    Block,
    MlpLayer,
    TransformerParams,
    Variant,
    attn_forward,
    build_block_mask,
    mlp_forward,
    tf_forward,
    tf_trace,
)


def _unit(D: int, row: int, col: int) -> np.ndarray:
    m = np.zeros((D, D))
    m[row, col] = 1.0
    return m


class TestBlockMask:
    def test_block_diagonal(self):
        mask = build_block_mask(6, 3)
        assert mask.U[0, 2] == 1.0
        assert mask.U[2, 3] == 0.0
        np.testing.assert_array_equal(mask.U + mask.Ubar, np.ones((6, 6)))

    def test_block_must_divide(self):
        with pytest.raises(LayoutError):
            build_block_mask(4, 3)


class TestAttention:
    def test_single_token_example(self):
        head = AttnHead(V=_unit(2, 1, 0), Q=np.diag([0.0, 1.0]), K=np.diag([0.0, 1.0]))
        layer = AttnLayer(heads=(head,), variant=Variant.STANDARD)
        out = attn_forward(layer, np.array([[1.0], [2.0]]))
        np.testing.assert_allclose(out, [[1.0], [6.0]])

    def test_matches_dense_formula(self, rng):
        D, N = 4, 5
        H = rng.standard_normal((D, N))
        heads = tuple(AttnHead(*(rng.standard_normal((D, D)) for _ in range(3))) for _ in range(2))
        layer = AttnLayer(heads=heads, variant=Variant.STANDARD)
        expected = H.copy()
        for h in heads:
            expected += (h.V @ H) @ np.maximum((h.Q @ H).T @ (h.K @ H), 0) / N
        np.testing.assert_allclose(attn_forward(layer, H), expected, atol=1e-12)

    def test_no_heads_is_identity(self, rng):
        H = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(attn_forward(AttnLayer(heads=(), variant=Variant.STANDARD), H), H)

    def test_cross_block_bias_isolates_variates(self):
        zero = np.zeros((2, 2))
        head = AttnHead(V=_unit(2, 1, 0), Q=zero, K=zero, u1=1.0, u2=-5.0)
        layer = AttnLayer(heads=(head,))
        out = attn_forward(layer, np.array([[1.0, 3.0], [0.0, 0.0]]), build_block_mask(2, 1))
        np.testing.assert_allclose(out[1], [0.5, 1.5])

    def test_zero_biases_match_standard(self, rng):
        D, N = 4, 6
        H = rng.standard_normal((D, N))
        heads = tuple(AttnHead(*(rng.standard_normal((D, D)) for _ in range(3))) for _ in range(3))
        standard = attn_forward(AttnLayer(heads=heads, variant=Variant.STANDARD), H)
        any_variate = attn_forward(AttnLayer(heads=heads), H, build_block_mask(N, 2))
        np.testing.assert_array_equal(any_variate, standard)

    def test_signed_pair_is_linear_attention(self, rng):
        D, N = 5, 7
        H = rng.standard_normal((D, N))
        V, Q, K = (rng.standard_normal((D, D)) for _ in range(3))
        layer = AttnLayer(heads=(AttnHead(V, Q, K), AttnHead(-V, -Q, K)), variant=Variant.STANDARD)
        # relu(s) - relu(-s) = s
        expected = H + (V @ H) @ ((Q @ H).T @ (K @ H)) / N
        np.testing.assert_allclose(attn_forward(layer, H), expected, rtol=0, atol=1e-12)

    def test_zero_values_leave_input(self, rng):
        D, N = 4, 6
        H = rng.standard_normal((D, N))
        zero = np.zeros((D, D))
        heads = tuple(
            AttnHead(zero, rng.standard_normal((D, D)), rng.standard_normal((D, D)), u1=2.0, u2=-1.0) for _ in range(3)
        )
        np.testing.assert_array_equal(attn_forward(AttnLayer(heads=heads), H, build_block_mask(N, 3)), H)

    def test_constructed_layers_follow_block_permutation(self, rng):
        d, q, T = 3, 2, 9
        series = TimeSeries(rng.standard_normal((d, T)))
        D = 1 + q + d * q + T + d
        enc = encode_anyvariate(series, D, mask_target=False)
        layout = IclLayout(enc.layout, q_max=q, d_max=d, q=q)
        layers = [*build_groupwise_shift(q, T, d, D, layout=layout), build_stack_layer(q, d, T, D, layout=layout)]
        cols = [enc.layout.column(j, t) for j in (2, 0, 1) for t in range(T)]

        def run(H: np.ndarray) -> np.ndarray:
            for layer in layers:
                H = attn_forward(layer, H, enc.mask)
            return H

        np.testing.assert_allclose(run(enc.H[:, cols]), run(enc.H)[:, cols], rtol=0, atol=1e-12)

    def test_any_variate_needs_mask(self):
        layer = AttnLayer(heads=(AttnHead(np.eye(2), np.eye(2), np.eye(2)),))
        with pytest.raises(LayoutError):
            attn_forward(layer, np.ones((2, 3)))

    def test_standard_rejects_bias(self):
        with pytest.raises(LayoutError):
            AttnLayer(heads=(AttnHead(np.eye(2), np.eye(2), np.eye(2), u1=1.0),), variant=Variant.STANDARD)

    def test_head_shape_mismatch(self):
        with pytest.raises(DimensionError):
            AttnHead(V=np.eye(2), Q=np.eye(3), K=np.eye(2))


class TestMlp:
    def test_residual_relu(self):
        layer = MlpLayer(W1=np.array([[1.0, -1.0]]), W2=np.array([[2.0], [0.0]]))
        out = mlp_forward(layer, np.array([[3.0, 1.0], [1.0, 3.0]]))
        np.testing.assert_allclose(out, [[7.0, 1.0], [1.0, 3.0]])

    def test_shape_check(self):
        with pytest.raises(DimensionError):
            MlpLayer(W1=np.ones((3, 2)), W2=np.ones((3, 2)))


class TestTransformer:
    def _params(self, rng, clip_bound=None) -> TransformerParams:
        D = 3
        attn = AttnLayer(heads=(AttnHead(*(rng.standard_normal((D, D)) for _ in range(3))),), variant=Variant.STANDARD)
        mlp = MlpLayer(W1=rng.standard_normal((4, D)), W2=rng.standard_normal((D, 4)))
        return TransformerParams(blocks=(Block(attn, mlp), Block(attn)), clip_bound=clip_bound)

    def test_empty_stack_is_identity(self, rng):
        H = rng.standard_normal((2, 3))
        np.testing.assert_array_equal(tf_forward(TransformerParams(), H), H)

    def test_trace_has_every_layer(self, rng):
        states = tf_trace(self._params(rng), rng.standard_normal((3, 4)))
        assert len(states) == 3

    def test_clip_bounds_every_layer(self, rng):
        states = tf_trace(self._params(rng, clip_bound=0.5), 10 * rng.standard_normal((3, 4)))
        assert all(np.abs(s).max() <= 0.5 for s in states[1:])

    def test_bad_clip_bound(self, rng):
        with pytest.raises(InvalidBound):
            tf_forward(self._params(rng, clip_bound=0.0), rng.standard_normal((3, 4)))

    def test_error_names_layer(self, rng):
        with pytest.raises(DimensionError, match="layer 0"):
            tf_forward(self._params(rng), rng.standard_normal((5, 4)))

    def test_dict_round_trip(self, rng):
        params = self._params(rng, clip_bound=2.0)
        back = TransformerParams.from_dict(params.to_dict())
        assert back.head_counts() == [1, 1]
        assert back.clip_bound == 2.0
        H = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(tf_forward(back, H), tf_forward(params, H))
