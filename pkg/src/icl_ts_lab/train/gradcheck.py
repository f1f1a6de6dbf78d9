"""Central finite-difference check of the torch gradients.

An entry is excluded when the activation pattern (relu signs in every head and
MLP, clip saturation in every layer and at the read-out) differs between
theta - h, theta and theta + h: the loss is not differentiable there.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from icl_ts_lab.core.config import settings
from icl_ts_lab.core.errors import SizeError
from icl_ts_lab.core.numerics import Matrix
from icl_ts_lab.data.encoding import EncodedInput
from icl_ts_lab.model.layers import TransformerParams, Variant
from icl_ts_lab.train.autodiff import flatten_params, param_slots, unflatten_params
from icl_ts_lab.train.trainer import grad

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class GradCheckReport:
    max_rel_err: float
    block_errors: dict[str, float]
    h: float
    n_checked: int
    excluded: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_err < 1e-5

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_rel_err": self.max_rel_err,
            "block_errors": dict(self.block_errors),
            "h": self.h,
            "n_checked": self.n_checked,
            "excluded": list(self.excluded),
        }


def _loss_and_pattern(
    params: TransformerParams, enc: EncodedInput, label: float, B_x: float
) -> tuple[float, bytes]:
    """Dense replay of tf_forward that also records every kink-relevant sign."""
    H: Matrix = enc.H.copy()
    N = H.shape[1]
    signs: list[np.ndarray] = []
    for block in params.blocks:
        out = H.copy()
        for head in block.attn.heads:
            scores = (head.Q @ H).T @ (head.K @ H)
            if block.attn.variant is Variant.ANY_VARIATE:
                scores = scores + head.u1 * enc.mask.U + head.u2 * enc.mask.Ubar
            signs.append(scores > 0)
            out += head.V @ H @ np.maximum(scores, 0.0) / N
        H = out
        if block.mlp is not None:
            pre = block.mlp.W1 @ H
            signs.append(pre > 0)
            H = H + block.mlp.W2 @ np.maximum(pre, 0.0)
        if params.clip_bound is not None:
            inside = np.abs(H) < params.clip_bound
            signs.append(inside)
            H = np.where(inside, H, np.sign(H) * params.clip_bound)
    pred = float(H[enc.layout.value_row, enc.layout.target_col])
    inside = abs(pred) < B_x
    signs.append(np.array([inside]))
    clipped = pred if inside else float(np.sign(pred)) * B_x
    pattern = b"".join(np.packbits(s.ravel()).tobytes() for s in signs)
    return 0.5 * (label - clipped) ** 2, pattern


def finite_diff_check(
    params: TransformerParams,
    enc: EncodedInput,
    label: float,
    B_x: float,
    h: float = 1e-5,
    *,
    floor: float = 1e-3,
) -> GradCheckReport:
    """Compare :func:`grad` with central differences on every parameter entry.

    Relative error is |a - n| / max(|a|, |n|, floor); ``floor`` keeps entries
    whose true gradient is ~0 from dividing round-off by round-off.
    """
    if h <= 0:
        raise ValueError(f"step h must be > 0, got {h}")
    theta = flatten_params(params)
    if theta.size > settings.gradcheck_max_entries:
        raise SizeError(f"{theta.size} parameter entries, cap is {settings.gradcheck_max_entries}")

    analytic = flatten_params(grad(params, enc, label, B_x))
    _, base = _loss_and_pattern(params, enc, label, B_x)
    block_errors: dict[str, float] = {}
    excluded: list[str] = []
    checked = 0

    for slot in param_slots(params):
        block_errors.setdefault(slot.block, 0.0)
        for k in range(slot.size):
            idx = slot.start + k
            plus, minus = theta.copy(), theta.copy()
            plus[idx] += h
            minus[idx] -= h
            lp, pat_p = _loss_and_pattern(unflatten_params(params, plus), enc, label, B_x)
            lm, pat_m = _loss_and_pattern(unflatten_params(params, minus), enc, label, B_x)
            if not pat_p == base == pat_m:
                excluded.append(f"{slot.name}[{k}]")
                continue
            numeric = (lp - lm) / (2 * h)
            a = analytic[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            block_errors[slot.block] = max(block_errors[slot.block], err)
            checked += 1

    if excluded:
        logger.info("Excluded %d entries at relu/clip kinks", len(excluded))
    return GradCheckReport(
        max_rel_err=max(block_errors.values(), default=0.0),
        block_errors=block_errors,
        h=h,
        n_checked=checked,
        excluded=excluded,
    )
