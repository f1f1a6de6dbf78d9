"""Desk-scale pretraining: clipped MSE loss, masking, AdamW with warm-up + cosine decay.

Each training sample is a random window of ``context_length`` steps from a random
series. The target slot is always masked; every other step of the target variate
is masked with probability ``mask_prob`` and predicted as well. The sample loss
averages 1/2 (y - Clip_{B_x}(prediction))^2 over its masked positions.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Literal

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, Field, model_validator

from icl_ts_lab.core.config import settings
from icl_ts_lab.core.errors import DivergenceError
from icl_ts_lab.core.serialization import read_json, write_json, write_table
from icl_ts_lab.data.encoding import EncodedInput, TimeSeries, encode_anyvariate, read_y
from icl_ts_lab.data.synth import Dataset
from icl_ts_lab.model.layers import (
    AttnHead,
    AttnLayer,
    Block,
    MlpLayer,
    TransformerParams,
    Variant,
    tf_forward,
)
from icl_ts_lab.model.norms import param_op_norm
from icl_ts_lab.train.autodiff import (
    TorchTransformer,
    as_tensor,
    module_grad_vector,
    params_dim,
    prediction_loss,
    unflatten_params,
)

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["step", "train_loss", "op_norm", "lr"]
EVAL_CHUNK = 256


class TrainConfig(BaseModel):
    # optimisation
    lr: float = Field(default=1e-3, ge=0)
    batch: int = Field(default=8, ge=1)
    steps: int = Field(default=200, ge=0)
    mask_prob: float = Field(default=0.15, ge=0, lt=1)
    optimizer: Literal["gd", "adamw"] = "adamw"
    betas: tuple[float, float] = (0.9, 0.98)
    weight_decay: float = Field(default=0.1, ge=0)
    warmup_steps: int = Field(default=10, ge=0)
    schedule: Literal["cosine", "constant"] = "cosine"
    norm_budget: float = Field(default=10.0, gt=0)  # monitored, never projected
    seed: int = 0

    # model and encoding
    variant: Variant = Variant.ANY_VARIATE
    dim: int = Field(default_factory=lambda: settings.model_dim, ge=1)
    layers: int = Field(default_factory=lambda: settings.model_layers, ge=1)
    heads: int = Field(default_factory=lambda: settings.model_heads, ge=1)
    mlp_hidden: int = Field(default=64, ge=0)
    init_scale: float = Field(default=0.02, gt=0)
    context_length: int = Field(default_factory=lambda: settings.context_length, ge=2)
    t_slots: int | None = None
    d_slots: int = Field(default_factory=lambda: settings.variate_slots, ge=1)
    B_x: float = Field(default=10.0, gt=0)
    clip_bound: float | None = None

    @model_validator(mode="after")
    def _fits(self) -> TrainConfig:
        if self.time_slots < self.context_length:
            raise ValueError(f"t_slots={self.t_slots} < context_length={self.context_length}")
        if self.dim < 1 + self.time_slots + self.d_slots:
            raise ValueError(f"dim={self.dim} cannot hold 1 + {self.time_slots} time + {self.d_slots} variate rows")
        return self

    @property
    def time_slots(self) -> int:
        return self.context_length if self.t_slots is None else self.t_slots

    @property
    def desk_scale(self) -> bool:
        return self.dim <= 64 and self.layers <= 4


# -- model init + snapshots -----------------------------------------------------


def init_params(cfg: TrainConfig) -> TransformerParams:
    """Gaussian init with std init_scale; biases u1 = u2 = 0."""
    rng = np.random.default_rng(cfg.seed)
    D = cfg.dim

    def w(*shape: int) -> np.ndarray:
        return rng.normal(0.0, cfg.init_scale, size=shape)

    blocks = []
    for _ in range(cfg.layers):
        heads = tuple(AttnHead(V=w(D, D), Q=w(D, D), K=w(D, D)) for _ in range(cfg.heads))
        mlp = MlpLayer(W1=w(cfg.mlp_hidden, D), W2=w(D, cfg.mlp_hidden)) if cfg.mlp_hidden else None
        blocks.append(Block(AttnLayer(heads=heads, variant=cfg.variant), mlp))
    return TransformerParams(blocks=tuple(blocks), clip_bound=cfg.clip_bound)


def save_snapshot(params: TransformerParams, cfg: TrainConfig, path: Path) -> Path:
    return write_json({"config": cfg.model_dump(mode="json"), "model": params.to_dict()}, path)


def load_snapshot(path: Path) -> tuple[TransformerParams, TrainConfig]:
    obj = read_json(path)
    return TransformerParams.from_dict(obj["model"]), TrainConfig.model_validate(obj["config"])


# -- loss and gradient ------------------------------------------------------------


def loss_mse(params: TransformerParams, enc: EncodedInput, label: float, B_x: float) -> float:
    pred = read_y(enc, tf_forward(params, enc.H, enc.mask))
    return 0.5 * (label - float(np.clip(pred, -B_x, B_x))) ** 2


def grad(params: TransformerParams, enc: EncodedInput, label: float, B_x: float) -> TransformerParams:
    """Gradient of :func:`loss_mse`, shaped like ``params``."""
    model = TorchTransformer.from_params(params)
    out = model(as_tensor(enc.H), as_tensor(enc.mask.U), as_tensor(enc.mask.Ubar))
    loss = prediction_loss(out[enc.layout.value_row, enc.layout.target_col], label, B_x)
    loss.backward()
    return unflatten_params(params, module_grad_vector(model))


# -- training -----------------------------------------------------------------------


def _encode(window: TimeSeries, cfg: TrainConfig) -> EncodedInput:
    return encode_anyvariate(window, cfg.dim, t_slots=cfg.time_slots, d_slots=cfg.d_slots)


def _sample_loss(
    model: TorchTransformer, series: TimeSeries, cfg: TrainConfig, rng: np.random.Generator
) -> torch.Tensor:
    ctx = min(cfg.context_length, series.T)
    start = int(rng.integers(0, series.T - ctx + 1))
    enc = _encode(series.window(start, start + ctx), cfg)
    target_cols = [t for t in range(ctx - 1) if rng.random() < cfg.mask_prob] + [ctx - 1]
    H = enc.H.copy()
    labels = series.values[0, start : start + ctx][target_cols]
    H[enc.layout.value_row, target_cols] = 0.0

    out = model(as_tensor(H), as_tensor(enc.mask.U), as_tensor(enc.mask.Ubar))
    preds = out[enc.layout.value_row, target_cols]
    return prediction_loss(preds, as_tensor(labels), cfg.B_x).mean()


def _lr_factor(cfg: TrainConfig):
    def factor(step: int) -> float:
        if step < cfg.warmup_steps:
            return (step + 1) / cfg.warmup_steps
        if cfg.schedule == "constant":
            return 1.0
        progress = (step - cfg.warmup_steps) / max(1, cfg.steps - cfg.warmup_steps)
        return 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))

    return factor


def _optimizer(model: TorchTransformer, cfg: TrainConfig) -> torch.optim.Optimizer:
    if cfg.optimizer == "gd":
        return torch.optim.SGD(model.parameters(), lr=cfg.lr)
    return torch.optim.AdamW(model.parameters(), lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)


def train(params0: TransformerParams, dataset: Dataset, cfg: TrainConfig) -> tuple[TransformerParams, pd.DataFrame]:
    """Minimise the masked clipped MSE; returns final params and the per-step history."""
    if len(dataset) == 0:
        raise ValueError("training dataset is empty")
    if not cfg.desk_scale:
        logger.warning("dim=%d, layers=%d is not validated at desk scale", cfg.dim, cfg.layers)

    rng = np.random.default_rng(cfg.seed)
    model = TorchTransformer.from_params(params0)
    opt = _optimizer(model, cfg)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, _lr_factor(cfg))
    rows: list[dict[str, Any]] = []
    over_budget = False

    for step in range(cfg.steps):
        lr = opt.param_groups[0]["lr"]
        picks = rng.integers(0, len(dataset), size=cfg.batch)
        opt.zero_grad()
        # fixed-order summation keeps the step deterministic
        loss = torch.stack([_sample_loss(model, dataset.series[int(i)], cfg, rng) for i in picks]).mean()
        value = float(loss.detach())
        if not math.isfinite(value):
            raise DivergenceError(f"training loss is {value}", step=step)
        loss.backward()
        opt.step()
        sched.step()

        op_norm = param_op_norm(model.to_params(), strict=False)
        if op_norm > cfg.norm_budget and not over_budget:
            logger.warning("Operator norm %.4g exceeds budget B=%.4g at step %d", op_norm, cfg.norm_budget, step)
            over_budget = True
        rows.append({"step": step, "train_loss": value, "op_norm": op_norm, "lr": lr})
        if step % 50 == 0:
            logger.debug("step %d: loss %.6g, op norm %.4g", step, value, op_norm)

    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    if rows:
        logger.info("Trained %d steps: loss %.6g -> %.6g", cfg.steps, rows[0]["train_loss"], rows[-1]["train_loss"])
    return model.to_params(), history


def write_history(history: pd.DataFrame, path: Path) -> Path:
    return write_table(history[HISTORY_COLUMNS], path)


# -- evaluation ---------------------------------------------------------------------


def position_losses(
    params: TransformerParams,
    series: TimeSeries,
    B_x: float,
    *,
    context_length: int | None = None,
    t_slots: int | None = None,
    d_slots: int | None = None,
    stride: int = 1,
) -> np.ndarray:
    """Loss at every position t >= context_length - 1, re-masking the label at t."""
    ctx = min(context_length or settings.context_length, series.T)
    D = params_dim(params)
    t_slots = ctx if t_slots is None else t_slots
    d_slots = settings.variate_slots if d_slots is None else d_slots
    ends = list(range(ctx - 1, series.T, stride))
    model = TorchTransformer.from_params(params)
    losses: list[np.ndarray] = []

    with torch.no_grad():
        for lo in range(0, len(ends), EVAL_CHUNK):
            chunk = ends[lo : lo + EVAL_CHUNK]
            encs = [
                encode_anyvariate(series.window(t - ctx + 1, t + 1), D, t_slots=t_slots, d_slots=d_slots)
                for t in chunk
            ]
            first = encs[0]
            H = as_tensor(np.stack([e.H for e in encs]))
            out = model(H, as_tensor(first.mask.U), as_tensor(first.mask.Ubar))
            preds = out[:, first.layout.value_row, first.layout.target_col]
            labels = as_tensor(np.array([e.label for e in encs]))
            losses.append(prediction_loss(preds, labels, B_x).numpy())
    return np.concatenate(losses) if losses else np.zeros(0)


def eval_test_loss(
    params: TransformerParams,
    test: Dataset,
    B_x: float,
    *,
    context_length: int | None = None,
    t_slots: int | None = None,
    d_slots: int | None = None,
    stride: int = 1,
) -> float:
    """Mean clipped 1/2-MSE over every test position of every series."""
    parts = [
        position_losses(
            params, s, B_x, context_length=context_length, t_slots=t_slots, d_slots=d_slots, stride=stride
        )
        for s in test.series
    ]
    flat = np.concatenate(parts) if parts else np.zeros(0)
    return float(flat.mean()) if flat.size else 0.0
