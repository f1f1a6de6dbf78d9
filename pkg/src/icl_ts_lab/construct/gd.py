"""Gradient descent on the in-context regression loss, one attention layer per step.

Every layer uses two heads (V, Q, K) and (-V, -Q, K); since relu(s) - relu(-s) = s
the pair is an exact linear attention. Scores pair a training column a with a
destination column b:

    s[a, b] = <phi_a, w_b> - y_a

and the value ``-(eta N / n) phi_a`` turns the sum over a into one GD step on
L_reg, applied identically to the weight rows of every column.
"""

from __future__ import annotations

import logging

from icl_ts_lab.construct.layout import IclLayout
from icl_ts_lab.core.errors import InvalidStep, LayoutError
from icl_ts_lab.model.layers import AttnHead, AttnLayer, Variant

logger = logging.getLogger(__name__)


def _linear_pair(V, Q, K) -> AttnLayer:
    return AttnLayer(heads=(AttnHead(V=V, Q=Q, K=K), AttnHead(V=-V, Q=-Q, K=K)), variant=Variant.ANY_VARIATE)


def build_gd_layer(layout: IclLayout, eta: float) -> AttnLayer:
    if not eta > 0:
        raise InvalidStep(f"GD step size must be > 0, got {eta}")
    layout.require("label", "D >= 1 + q_max + 4 * d_max * q_max + 1 + T + d_max")
    n = layout.n_train
    if n < 1:
        raise LayoutError(f"no training windows (T={layout.enc.T}, q={layout.q})")

    enc, N = layout.enc, layout.enc.n_tokens
    gated, weights, label = layout.section("gated"), layout.section("weights"), layout.row("label")
    Q, K, V = layout.zeros(), layout.zeros(), layout.zeros()
    for k in range(layout.n_feat):
        Q[weights[k], gated[k]] = 1.0
        K[weights[k], weights[k]] = 1.0
        V[weights[k], gated[k]] = -eta * N / n
    Q[label, label] = 1.0
    for t in range(enc.T):
        K[label, enc.time_row(t)] = -1.0
    return _linear_pair(V, Q, K)


def build_gd_layers(layout: IclLayout, eta: float, steps: int) -> list[AttnLayer]:
    """``steps`` identical GD layers (one shared layer object)."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    layer = build_gd_layer(layout, eta)
    return [layer] * steps


def build_readout_layer(layout: IclLayout) -> AttnLayer:
    """Adds <w, phi_query> to the value row of the query column."""
    layout.require("query", "D >= 1 + q_max + 3 * d_max * q_max + T + d_max")
    enc = layout.enc
    query, weights = layout.section("query"), layout.section("weights")
    Q, K, V = layout.zeros(), layout.zeros(), layout.zeros()
    for k in range(layout.n_feat):
        Q[weights[k], weights[k]] = 1.0
        K[weights[k], query[k]] = 1.0
    for t in range(enc.T):
        V[enc.value_row, enc.time_row(t)] = 1.0
    return _linear_pair(V, Q, K)
