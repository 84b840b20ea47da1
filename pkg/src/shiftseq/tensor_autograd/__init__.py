"""Autograd engine and the network operations built on it."""

from .engine import (
    GradCheckReport,
    Tensor,
    accumulate_grad,
    add,
    backward,
    concat,
    grad_check,
    matmul,
    mean_all,
    mul,
    reduce_sum,
    reshape,
    scale,
    select_time,
    sigmoid,
    slice_channels,
    slice_rows,
    stack_time,
    sum_all,
    tanh,
    track,
    transpose,
    unbroadcast,
)
from .ops import (
    AttentionParams,
    LstmDirection,
    avg_pool_mixer,
    batch_norm1d,
    bilstm,
    conv1d_full,
    cross_entropy,
    depthwise_conv1d,
    gelu,
    layer_norm,
    linear,
    mean_pool_time,
    mhsa,
    rel_position_bias,
    softmax,
)

__all__ = [
    "AttentionParams",
    "GradCheckReport",
    "LstmDirection",
    "Tensor",
    "accumulate_grad",
    "add",
    "avg_pool_mixer",
    "backward",
    "batch_norm1d",
    "bilstm",
    "concat",
    "conv1d_full",
    "cross_entropy",
    "depthwise_conv1d",
    "gelu",
    "grad_check",
    "layer_norm",
    "linear",
    "matmul",
    "mean_all",
    "mean_pool_time",
    "mhsa",
    "mul",
    "reduce_sum",
    "rel_position_bias",
    "reshape",
    "scale",
    "select_time",
    "sigmoid",
    "slice_channels",
    "slice_rows",
    "softmax",
    "stack_time",
    "sum_all",
    "tanh",
    "track",
    "transpose",
    "unbroadcast",
]
