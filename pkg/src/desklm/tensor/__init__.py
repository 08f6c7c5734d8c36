"""Dense-tensor arithmetic with reverse-mode differentiation."""

from desklm.tensor.gradcheck import check_single, grad_check, grad_check_report
from desklm.tensor.kernels import BACKEND
from desklm.tensor.value import (
    IGNORE_INDEX,
    ParamStore,
    Value,
    as_value,
    backward,
    bce_with_logits,
    cross_entropy,
    dropout,
    embedding,
    gelu,
    layer_norm,
    log,
    log_softmax,
    matmul,
    reshape,
    softmax,
    tanh,
    take,
    transpose,
    vmean,
    vsum,
)

__all__ = [
    "BACKEND",
    "IGNORE_INDEX",
    "ParamStore",
    "Value",
    "as_value",
    "backward",
    "bce_with_logits",
    "check_single",
    "cross_entropy",
    "dropout",
    "embedding",
    "gelu",
    "grad_check",
    "grad_check_report",
    "layer_norm",
    "log",
    "log_softmax",
    "matmul",
    "reshape",
    "softmax",
    "tanh",
    "take",
    "transpose",
    "vmean",
    "vsum",
]
