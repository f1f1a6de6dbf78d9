"""Differentiable float64 mirror of the transformer forward pass.

``TorchTransformer`` holds the same weights as a :class:`TransformerParams`
(stacked per layer as (M, D, D) tensors) and evaluates the identical formula, so
reverse-mode gradients from torch are gradients of the numpy model.

Subgradient conventions: relu'(0) = 0; the clip passes gradient only strictly
inside (-B, B).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from icl_ts_lab.core.errors import DimensionError
from icl_ts_lab.model.layers import AttnHead, AttnLayer, Block, MlpLayer, TransformerParams, Variant

logger = logging.getLogger(__name__)

DTYPE = torch.float64


def clip_t(x: torch.Tensor, bound: float) -> torch.Tensor:
    return torch.where(x.abs() < bound, x, torch.sign(x) * bound)


class TorchBlock(nn.Module):
    def __init__(self, block: Block, dim: int) -> None:
        super().__init__()
        heads = block.attn.heads
        self.variant = block.attn.variant
        self.n_heads = len(heads)

        def stack(attr: str) -> torch.Tensor:
            if not heads:
                return torch.zeros((0, dim, dim), dtype=DTYPE)
            return torch.tensor(np.stack([getattr(h, attr) for h in heads]), dtype=DTYPE)

        self.V = nn.Parameter(stack("V"))
        self.Q = nn.Parameter(stack("Q"))
        self.K = nn.Parameter(stack("K"))
        u1 = torch.tensor([h.u1 for h in heads], dtype=DTYPE)
        u2 = torch.tensor([h.u2 for h in heads], dtype=DTYPE)
        if self.variant is Variant.ANY_VARIATE:
            self.u1, self.u2 = nn.Parameter(u1), nn.Parameter(u2)
        else:
            self.register_buffer("u1", u1)
            self.register_buffer("u2", u2)
        if block.mlp is not None:
            self.W1 = nn.Parameter(torch.tensor(block.mlp.W1, dtype=DTYPE))
            self.W2 = nn.Parameter(torch.tensor(block.mlp.W2, dtype=DTYPE))
        else:
            self.W1 = self.W2 = None

    def forward(self, H: torch.Tensor, U: torch.Tensor, Ubar: torch.Tensor) -> torch.Tensor:
        N = H.shape[-1]
        if self.n_heads:
            Hm = H.unsqueeze(-3)  # (..., 1, D, N)
            scores = (self.Q @ Hm).transpose(-1, -2) @ (self.K @ Hm)  # (..., M, N, N)
            if self.variant is Variant.ANY_VARIATE:
                scores = scores + self.u1[:, None, None] * U + self.u2[:, None, None] * Ubar
            H = H + ((self.V @ Hm) @ torch.relu(scores)).sum(dim=-3) / N
        if self.W1 is not None:
            H = H + self.W2 @ torch.relu(self.W1 @ H)
        return H

    def to_block(self) -> Block:
        V, Q, K = (t.detach().cpu().numpy().copy() for t in (self.V, self.Q, self.K))
        u1, u2 = self.u1.detach().cpu().numpy(), self.u2.detach().cpu().numpy()
        heads = tuple(
            AttnHead(V=V[m], Q=Q[m], K=K[m], u1=float(u1[m]), u2=float(u2[m])) for m in range(self.n_heads)
        )
        mlp = None
        if self.W1 is not None:
            mlp = MlpLayer(W1=self.W1.detach().cpu().numpy().copy(), W2=self.W2.detach().cpu().numpy().copy())
        return Block(AttnLayer(heads=heads, variant=self.variant), mlp)


class TorchTransformer(nn.Module):
    def __init__(self, params: TransformerParams, dim: int) -> None:
        super().__init__()
        self.dim = dim
        self.clip_bound = params.clip_bound
        self.blocks = nn.ModuleList(TorchBlock(b, dim) for b in params.blocks)

    @classmethod
    def from_params(cls, params: TransformerParams) -> TorchTransformer:
        return cls(params, params_dim(params))

    def forward(self, H: torch.Tensor, U: torch.Tensor, Ubar: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            H = block(H, U, Ubar)
            if self.clip_bound is not None:
                H = clip_t(H, self.clip_bound)
        return H

    def to_params(self) -> TransformerParams:
        return TransformerParams(blocks=tuple(b.to_block() for b in self.blocks), clip_bound=self.clip_bound)


def params_dim(params: TransformerParams) -> int:
    for block in params.blocks:
        if block.attn.heads:
            return block.attn.heads[0].dim
        if block.mlp is not None:
            return block.mlp.W1.shape[1]
    raise DimensionError("cannot infer D from a model without weights")


def as_tensor(x: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def prediction_loss(pred: torch.Tensor, label: torch.Tensor | float, B_x: float) -> torch.Tensor:
    """1/2 (y - Clip_{B_x}(pred))^2."""
    return 0.5 * (label - clip_t(pred, B_x)) ** 2


# -- flat parameter vectors -------------------------------------------------


@dataclass(frozen=True, slots=True)
class ParamSlot:
    name: str
    start: int
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1

    @property
    def block(self) -> str:
        """Parameter block name without the per-head index, e.g. ``layer0.V``."""
        layer, *rest = self.name.split(".")
        return f"{layer}.{rest[-1]}"


def param_slots(params: TransformerParams) -> list[ParamSlot]:
    slots, pos = [], 0

    def add(name: str, shape: tuple[int, ...]) -> None:
        nonlocal pos
        slots.append(ParamSlot(name, pos, shape))
        pos += slots[-1].size

    for layer_idx, block in enumerate(params.blocks):
        for m, head in enumerate(block.attn.heads):
            for attr in ("V", "Q", "K"):
                add(f"layer{layer_idx}.head{m}.{attr}", getattr(head, attr).shape)
            if block.attn.variant is Variant.ANY_VARIATE:
                add(f"layer{layer_idx}.head{m}.u1", ())
                add(f"layer{layer_idx}.head{m}.u2", ())
        if block.mlp is not None:
            add(f"layer{layer_idx}.mlp.W1", block.mlp.W1.shape)
            add(f"layer{layer_idx}.mlp.W2", block.mlp.W2.shape)
    return slots


def flatten_params(params: TransformerParams) -> np.ndarray:
    parts: list[np.ndarray] = []
    for block in params.blocks:
        for head in block.attn.heads:
            parts += [head.V.ravel(), head.Q.ravel(), head.K.ravel()]
            if block.attn.variant is Variant.ANY_VARIATE:
                parts.append(np.array([head.u1, head.u2]))
        if block.mlp is not None:
            parts += [block.mlp.W1.ravel(), block.mlp.W2.ravel()]
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten_params(template: TransformerParams, vec: np.ndarray) -> TransformerParams:
    """Params shaped like ``template`` with entries read from ``vec``."""
    pos = 0

    def take(shape: tuple[int, ...]) -> np.ndarray:
        nonlocal pos
        size = int(np.prod(shape))
        out = np.array(vec[pos : pos + size], dtype=np.float64).reshape(shape)
        pos += size
        return out

    blocks = []
    for block in template.blocks:
        heads = []
        for head in block.attn.heads:
            V, Q, K = take(head.V.shape), take(head.Q.shape), take(head.K.shape)
            u1, u2 = (take((2,)) if block.attn.variant is Variant.ANY_VARIATE else (0.0, 0.0))
            heads.append(AttnHead(V=V, Q=Q, K=K, u1=float(u1), u2=float(u2)))
        mlp = None if block.mlp is None else MlpLayer(W1=take(block.mlp.W1.shape), W2=take(block.mlp.W2.shape))
        blocks.append(Block(AttnLayer(heads=tuple(heads), variant=block.attn.variant), mlp))
    if pos != vec.size:
        raise DimensionError(f"flat vector has {vec.size} entries, template needs {pos}")
    return TransformerParams(blocks=tuple(blocks), clip_bound=template.clip_bound)


def module_grad_vector(model: TorchTransformer) -> np.ndarray:
    """Gradients in the order of :func:`flatten_params`."""
    parts: list[np.ndarray] = []

    def g(p: torch.Tensor) -> np.ndarray:
        return np.zeros(p.shape) if p.grad is None else p.grad.detach().cpu().numpy()

    for block in model.blocks:
        V, Q, K = g(block.V), g(block.Q), g(block.K)
        any_variate = block.variant is Variant.ANY_VARIATE
        u1, u2 = (g(block.u1), g(block.u2)) if any_variate else (None, None)
        for m in range(block.n_heads):
            parts += [V[m].ravel(), Q[m].ravel(), K[m].ravel()]
            if any_variate:
                parts.append(np.array([u1[m], u2[m]]))
        if block.W1 is not None:
            parts += [g(block.W1).ravel(), g(block.W2).ravel()]
    return np.concatenate(parts) if parts else np.zeros(0)
