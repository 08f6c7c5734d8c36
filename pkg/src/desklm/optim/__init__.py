"""Optimizers and the warmup/decay learning-rate schedule."""

from desklm.optim.lr import LrSchedule, lr_at
from desklm.optim.steps import (
    GRAD_TRANSFORMS,
    OptState,
    adamw_step,
    identity_grad_transform,
    lamb_step,
    wants_decay,
)

__all__ = [
    "LrSchedule",
    "lr_at",
    "GRAD_TRANSFORMS",
    "OptState",
    "adamw_step",
    "identity_grad_transform",
    "lamb_step",
    "wants_decay",
]
