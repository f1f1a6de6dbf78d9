"""Reformatting layers: per-variate history rows, stacking, and 0/1 window gates.

All scores are integer multiples of N built from one-hot index rows, so the
layers below are exact in floating point.
"""

from __future__ import annotations

import logging

import numpy as np

from icl_ts_lab.construct.layout import IclLayout
from icl_ts_lab.core.errors import LayoutError
from icl_ts_lab.data.encoding import EncodingLayout
from icl_ts_lab.model.layers import AttnHead, AttnLayer, MlpLayer, Variant

logger = logging.getLogger(__name__)


def _shift_heads(layout: IclLayout) -> list[AttnHead]:
    """Head m copies the value at time t-m (mod T) of the same block into lag row m."""
    enc, T, N = layout.enc, layout.enc.T, layout.enc.n_tokens
    lag = layout.section("lag")
    Q = layout.zeros()
    for t in range(T):
        Q[enc.time_row(t), enc.time_row(t)] = N
    heads = []
    for m in range(1, layout.q_max + 1):
        K = layout.zeros()
        for t in range(T):
            K[enc.time_row((t - m) % T), enc.time_row(t)] = 1.0
        heads.append(AttnHead(V=layout.unit(lag[m - 1], enc.value_row), Q=Q.copy(), K=K))
    return heads


def build_shift_layer(q_max: int, T: int, D: int, *, layout: IclLayout | None = None) -> AttnLayer:
    """One standard-attention layer with q_max heads writing the history rows."""
    layout = layout or IclLayout(EncodingLayout.uni(T, D), q_max=q_max, d_max=1, q=q_max)
    layout.require("lag", "D >= q_max + T + 3")
    if layout.enc.d != 1:
        raise LayoutError("standard shift layer applies to a single variate block")
    return AttnLayer(heads=tuple(_shift_heads(layout)), variant=Variant.STANDARD)


def build_groupwise_shift(
    q_max: int,
    T: int,
    d: int,
    D: int,
    *,
    layout: IclLayout | None = None,
    u2: float | None = None,
    split_heads: int = 1,
) -> list[AttnLayer]:
    """Shift heads confined to each variate block by a negative cross-block bias.

    Scores lie in [0, N], so ``u2 = -(N + 1)`` sends every cross-block
    pre-activation below zero. ``split_heads`` spreads the q_max heads over that
    many consecutive layers.
    """
    layout = layout or IclLayout(EncodingLayout.anyvariate(d, T, D), q_max=q_max, d_max=d, q=q_max)
    layout.require("lag", "D >= q_max + T + d + 1")
    if split_heads < 1 or (q_max and split_heads > q_max):
        raise LayoutError(f"split_heads must lie in [1, q_max={q_max}], got {split_heads}")
    bias = -(layout.enc.n_tokens + 1.0) if u2 is None else u2
    heads = [AttnHead(V=h.V, Q=h.Q, K=h.K, u1=0.0, u2=bias) for h in _shift_heads(layout)]
    groups = np.array_split(np.arange(len(heads)), split_heads) if heads else [np.arange(0)]
    return [AttnLayer(heads=tuple(heads[i] for i in g), variant=Variant.ANY_VARIATE) for g in groups]


def build_stack_layer(
    q_max: int,
    d_max: int,
    T: int,
    D: int,
    *,
    d: int | None = None,
    q: int | None = None,
    layout: IclLayout | None = None,
) -> AttnLayer:
    """d_max heads moving the lag rows of every block into the target block's feature rows.

    Head j scores N * (1{same time} + 1{source in block j} * 1{destination in block 0}) - N,
    which is positive only for the matching column of block j.
    """
    if layout is None:
        enc = EncodingLayout.anyvariate(d_max if d is None else d, T, D, d_slots=d_max)
        layout = IclLayout(enc, q_max=q_max, d_max=d_max, q=q_max if q is None else q)
    layout.require("feat", "D >= 1 + q_max + d_max * q_max + T + d_max")
    enc, N = layout.enc, layout.enc.n_tokens
    lag, feat = layout.section("lag"), layout.section("feat")
    e0 = enc.variate_row(0)

    time_match = layout.zeros()
    for t in range(enc.T):
        time_match[enc.time_row(t), enc.time_row(t)] = 1.0
    K = time_match.copy()
    K[e0, e0] = 1.0

    heads = []
    for j in range(d_max):
        Q = N * time_match
        Q[e0, enc.variate_row(j)] = N
        V = layout.zeros()
        for r in range(1, layout.q + 1):
            V[feat[layout.feat_slot(j, r)], lag[r - 1]] = 1.0
        heads.append(AttnHead(V=V, Q=Q, K=K.copy(), u1=-float(N), u2=-float(N)))
    return AttnLayer(heads=tuple(heads), variant=Variant.ANY_VARIATE)


def _indicator_units(layout: IclLayout, keep: set[int], W1: np.ndarray, hi: int, lo: int) -> None:
    """Hidden pair whose difference is 0 on block-0 columns with time in ``keep``, else 1.

    x = sum_{t not in keep} p_t - e_0 takes values in {-1, 0, 1}; relu(x + 1) - relu(x)
    maps -1 to 0 and everything else to 1.
    """
    enc = layout.enc
    for t in range(enc.T):
        out = 0.0 if t in keep else 1.0
        W1[lo, enc.time_row(t)] = out
        W1[hi, enc.time_row(t)] = out + 1.0
    W1[lo, enc.variate_row(0)] = -1.0
    W1[hi, enc.variate_row(0)] = -1.0


def build_index_mlp(layout: IclLayout) -> MlpLayer:
    """Writes off_train (0 on training windows) and off_query (0 on the query column)."""
    layout.require("off_query", "D >= 1 + q_max + 4 * d_max * q_max + 3 + T + d_max")
    D = layout.enc.D
    W1 = np.zeros((4, D))
    W2 = np.zeros((D, 4))
    _indicator_units(layout, set(layout.train_times()), W1, hi=0, lo=1)
    _indicator_units(layout, {layout.enc.T - 1}, W1, hi=2, lo=3)
    W2[layout.row("off_train"), [0, 1]] = [1.0, -1.0]
    W2[layout.row("off_query"), [2, 3]] = [1.0, -1.0]
    return MlpLayer(W1=W1, W2=W2)


def build_gate_mlp(layout: IclLayout, bound: float) -> MlpLayer:
    """relu(v - M off) - relu(-v - M off): v where off = 0, 0 where off = 1 and |v| <= M.

    Gates features and labels to the training columns and features to the query column.
    """
    if not bound > 0:
        raise ValueError(f"gate bound must be > 0, got {bound}")
    layout.require("off_query", "D >= 1 + q_max + 4 * d_max * q_max + 3 + T + d_max")
    D = layout.enc.D
    feat, gated, query = layout.section("feat"), layout.section("gated"), layout.section("query")
    pairs = [(feat[k], gated[k], "off_train") for k in range(layout.n_feat)]
    pairs += [(feat[k], query[k], "off_query") for k in range(layout.n_feat)]
    pairs.append((layout.enc.value_row, layout.row("label"), "off_train"))

    W1 = np.zeros((2 * len(pairs), D))
    W2 = np.zeros((D, 2 * len(pairs)))
    for i, (src, dst, off) in enumerate(pairs):
        plus, minus = 2 * i, 2 * i + 1
        W1[plus, src], W1[plus, layout.row(off)] = 1.0, -bound
        W1[minus, src], W1[minus, layout.row(off)] = -1.0, -bound
        W2[dst, plus], W2[dst, minus] = 1.0, -1.0
    return MlpLayer(W1=W1, W2=W2)
