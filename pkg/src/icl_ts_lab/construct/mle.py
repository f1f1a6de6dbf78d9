"""Noise-variance estimate from the in-context GD weights.

Layer 1 writes r_b = y_b - <w, phi_b> on every training column (0 elsewhere).
Layer 2 writes (1/n) sum_b r_b^2 into the variance row of every column; the
score r_a against a constant key, with value (N/n) r_a, keeps both layers exact
linear attentions.
"""

from __future__ import annotations

from icl_ts_lab.construct.gd import _linear_pair
from icl_ts_lab.construct.layout import IclLayout
from icl_ts_lab.core.errors import LayoutError
from icl_ts_lab.model.layers import AttnLayer


def build_mle_layers(layout: IclLayout) -> list[AttnLayer]:
    layout.require("var", "D >= 1 + q_max + 4 * d_max * q_max + 5 + T + d_max")
    n = layout.n_train
    if n < 1:
        raise LayoutError(f"no training windows (T={layout.enc.T}, q={layout.q})")
    enc, N = layout.enc, layout.enc.n_tokens
    gated, weights = layout.section("gated"), layout.section("weights")
    label, resid, var = layout.row("label"), layout.row("resid"), layout.row("var")

    # s[a, b] = <w_a, phi_b> - y_b = -r_b
    Q, K, V = layout.zeros(), layout.zeros(), layout.zeros()
    for k in range(layout.n_feat):
        Q[weights[k], weights[k]] = 1.0
        K[weights[k], gated[k]] = 1.0
    K[label, label] = -1.0
    for t in range(enc.T):
        Q[label, enc.time_row(t)] = 1.0
        V[resid, enc.time_row(t)] = -1.0
    residual = _linear_pair(V, Q, K)

    # s[a, b] = r_a
    Q2, K2, V2 = layout.zeros(), layout.zeros(), layout.zeros()
    Q2[resid, resid] = 1.0
    for t in range(enc.T):
        K2[resid, enc.time_row(t)] = 1.0
    V2[var, resid] = N / n
    variance = _linear_pair(V2, Q2, K2)
    return [residual, variance]
