from icl_ts_lab.model.layers import (
    AttnHead,
    AttnLayer,
    Block,
    BlockMask,
    MlpLayer,
    TransformerParams,
    Variant,
    attn_forward,
    build_block_mask,
    mlp_forward,
    tf_forward,
)
from icl_ts_lab.model.norms import LipschitzReport, lipschitz_constants, param_op_norm

__all__ = [
    "AttnHead",
    "AttnLayer",
    "Block",
    "BlockMask",
    "LipschitzReport",
    "MlpLayer",
    "TransformerParams",
    "Variant",
    "attn_forward",
    "build_block_mask",
    "lipschitz_constants",
    "mlp_forward",
    "param_op_norm",
    "tf_forward",
]
