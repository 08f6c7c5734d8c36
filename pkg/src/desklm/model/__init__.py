"""Transformer encoder: configuration, parameters, forward pass."""

from desklm.model.config import (
    CLS_ID,
    FIRST_CONTENT_ID,
    MASK_ID,
    PAD_ID,
    SEP_ID,
    SPECIAL_IDS,
    ModelConfig,
    TokenizedBatch,
    desk_config,
    full_size_config,
)
from desklm.model.encoder import (
    count_parameters,
    embed_batch,
    encoder_forward,
    init_parameters,
    parameter_shapes,
    pool_cls,
)

__all__ = [
    "CLS_ID",
    "FIRST_CONTENT_ID",
    "MASK_ID",
    "PAD_ID",
    "SEP_ID",
    "SPECIAL_IDS",
    "ModelConfig",
    "TokenizedBatch",
    "count_parameters",
    "desk_config",
    "embed_batch",
    "encoder_forward",
    "full_size_config",
    "init_parameters",
    "parameter_shapes",
    "pool_cls",
]
