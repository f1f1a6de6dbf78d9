"""Parameter operator norm and the layer/stack Lipschitz constants."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from icl_ts_lab.core.numerics import spectral_norm, spectral_norm_or_bound
from icl_ts_lab.model.layers import TransformerParams

logger = logging.getLogger(__name__)


def param_op_norm(params: TransformerParams, *, strict: bool = True) -> float:
    """max over layers of  max_m{|Q|,|K|,|u1|,|u2|} + sum_m |V| + |W1| + |W2|.

    With ``strict=False`` a non-converging power iteration contributes its
    Frobenius upper bound instead of raising.
    """
    norm = spectral_norm if strict else (lambda m: spectral_norm_or_bound(m)[0])
    seen: dict[int, float] = {}
    best = 0.0
    for block in params.blocks:
        key = id(block)
        if key not in seen:
            heads = block.attn.heads
            qk = max((max(norm(h.Q), norm(h.K), abs(h.u1), abs(h.u2)) for h in heads), default=0.0)
            v = sum(norm(h.V) for h in heads)
            mlp = 0.0 if block.mlp is None else norm(block.mlp.W1) + norm(block.mlp.W2)
            seen[key] = qk + v + mlp
        best = max(best, seen[key])
    return best


@dataclass(frozen=True, slots=True)
class LipschitzReport:
    iota: float
    B_theta: float
    B_H: float
    multi_layer: float
    R_bar: float
    overflow: bool = False

    def to_dict(self) -> dict[str, float | bool]:
        return asdict(self)


def lipschitz_constants(B: float, R: float, T: int, d: int, L: int) -> LipschitzReport:
    """Per-layer and stacked Lipschitz constants of TF with norm budget B and inputs bounded by R.

    ``B = 0`` is accepted as the degenerate collapse of the formulas.
    """
    if B < 0 or R <= 0:
        raise ValueError(f"need B >= 0 and R > 0, got B={B}, R={R}")
    if min(T, d, L) < 1:
        raise ValueError("T, d and L must be >= 1")

    b, r = np.float64(B), np.float64(R)
    with np.errstate(over="ignore", invalid="ignore"):
        iota = max(b**2 * r**2 + T + (T - 1) * d, b * (T - 1) * d)
        B_H = (1 + b**2) * (1 + b**3 * r**2)
        B_theta = (1 + b**2) * (1 + iota) + b * r * (1 + b**3 * r**2)
        multi = L * B_H ** (L - 1) * B_theta
        R_bar = r + b**3 * r**3
    values = [iota, B_theta, B_H, multi, R_bar]
    overflow = not all(np.isfinite(v) for v in values)
    if overflow:
        logger.warning("Lipschitz constants overflowed (B=%g, R=%g, L=%d)", B, R, L)
    return LipschitzReport(*(float(v) for v in values), overflow=overflow)
