"""Full in-context AR regressor: reformat layers, GD layers, read-out, optional MLE.

Layer plan (L1 reformat layers, then L2 GD layers):

    1 .. c      group-wise shift heads (q_max in total); layer 1 also carries the index MLP
    c + 1       stack heads (d_max) + gate MLP
    L2 layers   GD steps, 2 heads each
    1 layer     read-out of <w, phi_query> into the target slot
    2 layers    residual and variance (with_mle only)
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from icl_ts_lab.baseline import build_regression_dataset, gram_spectrum, ls_closed_form, split_last
from icl_ts_lab.construct.gd import build_gd_layers, build_readout_layer
from icl_ts_lab.construct.layout import IclLayout, preload_weights, read_weights
from icl_ts_lab.construct.mle import build_mle_layers
from icl_ts_lab.construct.reformat import (
    build_gate_mlp,
    build_groupwise_shift,
    build_index_mlp,
    build_shift_layer,
    build_stack_layer,
)
from icl_ts_lab.core.errors import CapacityError
from icl_ts_lab.core.numerics import Matrix
from icl_ts_lab.data.encoding import EncodedInput, EncodingLayout, TimeSeries, encode_anyvariate, encode_univariate, read_y
from icl_ts_lab.model.layers import Block, TransformerParams, tf_forward
from icl_ts_lab.model.norms import param_op_norm

logger = logging.getLogger(__name__)


class GdIclSpec(BaseModel):
    """Sizes, step size and conditioning of an in-context GD regressor."""

    model_config = ConfigDict(frozen=True)

    q_max: int = Field(ge=0)
    d_max: int = Field(ge=1)
    q: int | None = None  # lag actually fitted, defaults to q_max
    L2: int | None = Field(default=None, ge=0)  # defaults to the depth needed for epsilon
    eta: float | None = None  # defaults to 1 / beta
    B_w: float = Field(gt=0)
    B_x: float = Field(gt=0)
    epsilon: float = Field(gt=0)
    alpha: float = Field(gt=0)
    beta: float = Field(gt=0)

    @model_validator(mode="after")
    def _check(self) -> GdIclSpec:
        if self.alpha > self.beta * (1 + 1e-12):
            raise ValueError(f"need alpha <= beta, got {self.alpha} > {self.beta}")
        if not self.epsilon < self.B_x * self.B_w / 2:
            raise ValueError("need epsilon < B_x * B_w / 2")
        if self.q is not None and not 0 <= self.q <= self.q_max:
            raise ValueError(f"q={self.q} outside [0, q_max={self.q_max}]")
        if self.eta is not None and self.eta <= 0:
            raise ValueError("eta must be > 0")
        return self

    @property
    def kappa(self) -> float:
        return self.beta / self.alpha

    @property
    def lag(self) -> int:
        return self.q_max if self.q is None else self.q

    @property
    def step_size(self) -> float:
        return 1.0 / self.beta if self.eta is None else self.eta

    @property
    def required_steps(self) -> int:
        """ceil(2 kappa log(B_x B_w / 2 eps))."""
        return max(math.ceil(2 * self.kappa * math.log(self.B_x * self.B_w / (2 * self.epsilon))), 0)

    @property
    def steps(self) -> int:
        return self.required_steps if self.L2 is None else self.L2

    @property
    def gate_bound(self) -> float:
        return self.B_x + 1.0

    def claimed_error(self, steps: int | None = None) -> float:
        """B_x B_w / 2 * exp(-L2 / 2 kappa), the error guaranteed after ``steps`` layers."""
        steps = self.steps if steps is None else steps
        return self.B_x * self.B_w / 2 * math.exp(-steps / (2 * self.kappa))


def instance_spec(
    series: TimeSeries,
    q: int,
    *,
    q_max: int | None = None,
    d_max: int | None = None,
    L2: int | None = None,
    eta: float | None = None,
    epsilon: float | None = None,
) -> GdIclSpec:
    """Spec whose conditioning and bounds are read off the series' own regression problem."""
    train, _, _ = split_last(build_regression_dataset(series, q))
    alpha, beta = gram_spectrum(train)
    if beta <= 0:
        alpha = beta = 1.0
    norms = np.linalg.norm(train.X, axis=1) if train.n else np.zeros(1)
    B_x = max(float(norms.max()), float(np.abs(series.values).max()), 1e-12)
    B_w = max(float(np.linalg.norm(ls_closed_form(train))), 1e-12)
    return GdIclSpec(
        q_max=q if q_max is None else q_max,
        d_max=series.d if d_max is None else d_max,
        q=q,
        L2=L2,
        eta=eta,
        B_w=B_w,
        B_x=B_x,
        epsilon=1e-6 * B_x * B_w if epsilon is None else epsilon,
        alpha=alpha,
        beta=beta,
    )


@dataclass(slots=True)
class ConstructionReport:
    layer_count: int
    head_counts: list[int]
    L1: int
    L2: int
    reformat_heads: int
    max_gd_heads: int
    budget_ok: bool
    required_dim: int
    nominal_dim: int
    D: int
    param_op_norm: float
    claimed_bound: float
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["layers"] = out.pop("layer_count")
        out["heads"] = out.pop("head_counts")
        out["op_norm"] = out.pop("param_op_norm")
        out["bound"] = out.pop("claimed_bound")
        return out


def icl_layout(spec: GdIclSpec, enc: EncodingLayout) -> IclLayout:
    return IclLayout(enc=enc, q_max=spec.q_max, d_max=spec.d_max, q=spec.lag)


def assemble_icl_transformer(
    spec: GdIclSpec,
    T: int,
    D: int,
    *,
    d: int | None = None,
    univariate: bool = False,
    split_heads: int = 1,
    with_mle: bool = False,
    tamper: str | None = None,
) -> tuple[TransformerParams, ConstructionReport]:
    """Compose reformat, GD, read-out (and MLE) layers for a d-variate series of length T.

    ``tamper="u2"`` zeroes the cross-block bias of the shift heads (negative control).
    """
    d = (1 if univariate else spec.d_max) if d is None else d
    if univariate:
        enc = EncodingLayout.uni(T, D)
    else:
        enc = EncodingLayout.anyvariate(d, T, D, d_slots=spec.d_max)
    layout = icl_layout(spec, enc)
    upto = "var" if with_mle else "off_query"
    need = layout.required_dim(upto)
    if D < need:
        raise CapacityError(
            f"D >= 1 + q_max + 4*d_max*q_max + {5 if with_mle else 3} + T + d_max "
            f"(q_max={spec.q_max}, d_max={spec.d_max}, T={T})",
            required=need,
            available=D,
        )

    index = build_index_mlp(layout)
    if univariate:
        shift = [build_shift_layer(spec.q_max, T, D, layout=layout)]
    else:
        shift = build_groupwise_shift(
            spec.q_max, T, d, D, layout=layout, u2=0.0 if tamper == "u2" else None, split_heads=split_heads
        )
    reformat = [Block(shift[0], index), *(Block(layer) for layer in shift[1:])]
    reformat.append(Block(build_stack_layer(spec.q_max, spec.d_max, T, D, layout=layout), build_gate_mlp(layout, spec.gate_bound)))

    gd_block = Block(build_gd_layers(layout, spec.step_size, 1)[0]) if spec.steps else None
    blocks = [*reformat, *([gd_block] * spec.steps), Block(build_readout_layer(layout))]
    if with_mle:
        blocks += [Block(layer) for layer in build_mle_layers(layout)]
    params = TransformerParams(blocks=tuple(blocks))

    heads = params.head_counts()
    L1 = len(reformat)
    rest = heads[L1:]
    report = ConstructionReport(
        layer_count=len(blocks),
        head_counts=heads,
        L1=L1,
        L2=spec.steps,
        reformat_heads=sum(heads[:L1]),
        max_gd_heads=max(rest, default=0),
        budget_ok=sum(heads[:L1]) == spec.q_max + spec.d_max and max(rest, default=0) <= 3,
        required_dim=need,
        nominal_dim=(spec.q_max + 1) * spec.d_max + T + 2,
        D=D,
        param_op_norm=param_op_norm(params, strict=False),
        claimed_bound=spec.claimed_error(),
    )
    if tamper:
        report.notes.append(f"tampered: {tamper}")
    logger.debug("Assembled %d layers (L1=%d, L2=%d, D=%d)", report.layer_count, L1, spec.steps, D)
    return params, report


@dataclass(slots=True)
class IclRun:
    prediction: float
    weights: np.ndarray
    variance: float | None
    H_out: Matrix
    enc: EncodedInput
    layout: IclLayout
    report: ConstructionReport


def encode_for_icl(series: TimeSeries, spec: GdIclSpec, D: int, *, univariate: bool = False) -> EncodedInput:
    if univariate:
        return encode_univariate(series, D)
    return encode_anyvariate(series, D, d_slots=spec.d_max)


def minimal_dim(spec: GdIclSpec, T: int, *, univariate: bool = False, with_mle: bool = False) -> int:
    enc_tail = 2 if univariate else spec.d_max
    sizing = IclLayout(
        enc=EncodingLayout(d=1, T=T, D=10**9, t_slots=T, d_slots=spec.d_max, univariate=univariate),
        q_max=spec.q_max,
        d_max=spec.d_max,
        q=spec.lag,
    )
    return sizing.section("var" if with_mle else "off_query").stop + T + enc_tail


def run_constructed_icl(
    series: TimeSeries,
    spec: GdIclSpec,
    *,
    D: int | None = None,
    univariate: bool = False,
    split_heads: int = 1,
    with_mle: bool = False,
    w0: np.ndarray | None = None,
    tamper: str | None = None,
) -> IclRun:
    """Encode, run the assembled transformer and read prediction, weights and variance."""
    D = minimal_dim(spec, series.T, univariate=univariate, with_mle=with_mle) if D is None else D
    params, report = assemble_icl_transformer(
        spec, series.T, D, d=series.d, univariate=univariate, split_heads=split_heads, with_mle=with_mle, tamper=tamper
    )
    enc = encode_for_icl(series, spec, D, univariate=univariate)
    layout = icl_layout(spec, enc.layout)
    H = enc.H if w0 is None else preload_weights(enc.H, layout, w0)
    H_out = tf_forward(params, H, enc.mask)
    return IclRun(
        prediction=read_y(enc, H_out),
        weights=read_weights(H_out, layout),
        variance=float(H_out[layout.row("var"), enc.layout.target_col]) if with_mle else None,
        H_out=H_out,
        enc=enc,
        layout=layout,
        report=report,
    )
