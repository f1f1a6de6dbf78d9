"""Attention, any-variate attention, MLP and the stacked transformer.

Score convention: entry (a, b) of ``(Q H)^T (K H)`` pairs source column a with
destination column b, so column b of the output receives
``(1/N) sum_a V h_a * relu(score[a, b] + bias[a, b])``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np

from icl_ts_lab.core.errors import DimensionError, LabError, LayoutError
from icl_ts_lab.core.numerics import Matrix, as_matrix, clip, relu
from icl_ts_lab.core.serialization import matrix_from_dict, matrix_to_dict

logger = logging.getLogger(__name__)


class Variant(StrEnum):
    STANDARD = "standard"
    ANY_VARIATE = "any_variate"


@dataclass(frozen=True, slots=True)
class BlockMask:
    """U marks same-variate token pairs, Ubar = allones - U the rest."""

    U: Matrix
    Ubar: Matrix
    block_size: int

    @property
    def n_tokens(self) -> int:
        return self.U.shape[0]


def build_block_mask(n_tokens: int, block_size: int) -> BlockMask:
    if block_size < 1 or n_tokens % block_size:
        raise LayoutError(f"block size {block_size} does not divide {n_tokens} tokens")
    blocks = np.arange(n_tokens) // block_size
    U = (blocks[:, None] == blocks[None, :]).astype(np.float64)
    return BlockMask(U=U, Ubar=1.0 - U, block_size=block_size)


@dataclass(frozen=True, slots=True)
class AttnHead:
    V: Matrix
    Q: Matrix
    K: Matrix
    u1: float = 0.0
    u2: float = 0.0

    def __post_init__(self) -> None:
        shapes = {self.V.shape, self.Q.shape, self.K.shape}
        if len(shapes) != 1 or self.V.shape[0] != self.V.shape[1]:
            raise DimensionError(f"head weights must be equal square matrices, got {sorted(shapes)}")

    @property
    def dim(self) -> int:
        return self.V.shape[0]

    def to_dict(self) -> dict[str, Any]:
        return {
            "V": matrix_to_dict(self.V),
            "Q": matrix_to_dict(self.Q),
            "K": matrix_to_dict(self.K),
            "u1": self.u1,
            "u2": self.u2,
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> AttnHead:
        return cls(
            V=matrix_from_dict(obj["V"]),
            Q=matrix_from_dict(obj["Q"]),
            K=matrix_from_dict(obj["K"]),
            u1=float(obj.get("u1", 0.0)),
            u2=float(obj.get("u2", 0.0)),
        )


@dataclass(frozen=True, slots=True)
class AttnLayer:
    """M heads sharing dimension D. A layer without heads is the identity."""

    heads: tuple[AttnHead, ...]
    variant: Variant = Variant.ANY_VARIATE

    def __post_init__(self) -> None:
        if len({h.dim for h in self.heads}) > 1:
            raise DimensionError("heads of one layer must share D")
        if self.variant is Variant.STANDARD and any(h.u1 or h.u2 for h in self.heads):
            raise LayoutError("standard attention requires u1 = u2 = 0")

    @property
    def n_heads(self) -> int:
        return len(self.heads)


@dataclass(frozen=True, slots=True)
class MlpLayer:
    W1: Matrix  # D' x D
    W2: Matrix  # D x D'

    def __post_init__(self) -> None:
        if self.W1.shape[0] != self.W2.shape[1] or self.W1.shape[1] != self.W2.shape[0]:
            raise DimensionError(f"MLP shapes W1 {self.W1.shape}, W2 {self.W2.shape}")

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]


@dataclass(frozen=True, slots=True)
class Block:
    attn: AttnLayer
    mlp: MlpLayer | None = None


@dataclass(frozen=True, slots=True)
class TransformerParams:
    blocks: tuple[Block, ...] = field(default_factory=tuple)
    clip_bound: float | None = None

    @property
    def depth(self) -> int:
        return len(self.blocks)

    @property
    def attention_only(self) -> bool:
        return all(b.mlp is None for b in self.blocks)

    def head_counts(self) -> list[int]:
        return [b.attn.n_heads for b in self.blocks]

    def to_dict(self) -> dict[str, Any]:
        return {
            "layers": [
                {
                    "variant": b.attn.variant.value,
                    "heads": [h.to_dict() for h in b.attn.heads],
                    "mlp": None
                    if b.mlp is None
                    else {"W1": matrix_to_dict(b.mlp.W1), "W2": matrix_to_dict(b.mlp.W2)},
                }
                for b in self.blocks
            ],
            "clip_bound": self.clip_bound,
        }

    @classmethod
    def from_dict(cls, obj: dict[str, Any]) -> TransformerParams:
        blocks = []
        for layer in obj["layers"]:
            attn = AttnLayer(
                heads=tuple(AttnHead.from_dict(h) for h in layer["heads"]),
                variant=Variant(layer.get("variant", Variant.ANY_VARIATE)),
            )
            mlp = layer.get("mlp")
            blocks.append(
                Block(attn, None if mlp is None else MlpLayer(matrix_from_dict(mlp["W1"]), matrix_from_dict(mlp["W2"])))
            )
        return cls(blocks=tuple(blocks), clip_bound=obj.get("clip_bound"))


# -- forward passes ---------------------------------------------------------


def attn_forward(layer: AttnLayer, H: Matrix, mask: BlockMask | None = None) -> Matrix:
    """H + (1/N) sum_m (V_m H) relu((Q_m H)^T (K_m H) + u1 U + u2 Ubar)."""
    H = as_matrix(H)
    D, N = H.shape
    if layer.variant is Variant.ANY_VARIATE and mask is None:
        raise LayoutError("any-variate attention needs a block mask")
    if mask is not None and mask.n_tokens != N:
        raise LayoutError(f"mask covers {mask.n_tokens} tokens, H has {N}")

    out = H.copy()
    for head in layer.heads:
        if head.dim != D:
            raise DimensionError(f"head dimension {head.dim} != H rows {D}")
        v_rows = _nonzero_rows(head.V)
        if v_rows.size == 0:
            continue
        # constructed weights are sparse; only the non-zero blocks enter the products
        qk_rows = np.intersect1d(_nonzero_rows(head.Q), _nonzero_rows(head.K))
        scores = _project(head.Q, qk_rows, H).T @ _project(head.K, qk_rows, H)
        if layer.variant is Variant.ANY_VARIATE:
            if head.u1:
                scores = scores + head.u1 * mask.U
            if head.u2:
                scores = scores + head.u2 * mask.Ubar
        out[v_rows] += _project(head.V, v_rows, H) @ relu(scores) / N
    return out


def _nonzero_rows(W: Matrix) -> np.ndarray:
    return np.flatnonzero(np.any(W != 0, axis=1))


def _project(W: Matrix, rows: np.ndarray, H: Matrix) -> Matrix:
    """(W H)[rows], skipping the all-zero columns of W[rows]."""
    sub = W[rows]
    cols = np.flatnonzero(np.any(sub != 0, axis=0))
    return sub[:, cols] @ H[cols]


def mlp_forward(layer: MlpLayer, H: Matrix) -> Matrix:
    H = as_matrix(H)
    if layer.W1.shape[1] != H.shape[0]:
        raise DimensionError(f"MLP expects D = {layer.W1.shape[1]}, H has {H.shape[0]} rows")
    return H + layer.W2 @ relu(layer.W1 @ H)


def tf_trace(params: TransformerParams, H: Matrix, mask: BlockMask | None = None) -> list[Matrix]:
    """Hidden state after every layer, input first."""
    states = [as_matrix(H)]
    for i, block in enumerate(params.blocks):
        try:
            h = attn_forward(block.attn, states[-1], mask)
            if block.mlp is not None:
                h = mlp_forward(block.mlp, h)
            if params.clip_bound is not None:
                h = clip(h, params.clip_bound)
        except LabError as exc:
            raise _annotated(exc, i) from exc
        states.append(h)
    return states


def tf_forward(params: TransformerParams, H: Matrix, mask: BlockMask | None = None) -> Matrix:
    return tf_trace(params, H, mask)[-1]


def _annotated(exc: LabError, layer: int) -> LabError:
    clone = exc.__class__.__new__(exc.__class__)
    clone.__dict__.update(getattr(exc, "__dict__", {}))
    clone.args = (f"layer {layer}: {exc}",)
    return clone
