"""Downstream heads, input packing, and fine-tuning strategy mechanisms."""

from desklm.finetune.spans import SPAN_MASK_BIAS, decode_span, mask_non_passage, span_logits
from desklm.finetune.strategies import (
    AugmentationConfig,
    KdConfig,
    SmartConfig,
    SmoothingConfig,
    StrategyConfig,
    TransferConfig,
    choice_smoothing_loss,
    kd_loss,
    smart_regularizer,
    symmetric_kl,
)
from desklm.finetune.tasks import (
    KIND_CLASSIFICATION,
    KIND_MULTICHOICE,
    KIND_SPAN,
    TaskSpec,
    choice_scores,
    classification_logits,
    init_task_heads,
    pack_multichoice,
    pack_span_input,
    pad_rows,
    passage_positions,
)
from desklm.finetune.transfer import TransferReport, merge_extra_data, transfer_init

__all__ = [
    "SPAN_MASK_BIAS",
    "decode_span",
    "mask_non_passage",
    "span_logits",
    "AugmentationConfig",
    "KdConfig",
    "SmartConfig",
    "SmoothingConfig",
    "StrategyConfig",
    "TransferConfig",
    "choice_smoothing_loss",
    "kd_loss",
    "smart_regularizer",
    "symmetric_kl",
    "KIND_CLASSIFICATION",
    "KIND_MULTICHOICE",
    "KIND_SPAN",
    "TaskSpec",
    "choice_scores",
    "classification_logits",
    "init_task_heads",
    "pack_multichoice",
    "pack_span_input",
    "pad_rows",
    "passage_positions",
    "TransferReport",
    "merge_extra_data",
    "transfer_init",
]
