"""Multi-task pre-training: masking, pair construction, losses, curriculum."""

from desklm.pretrain.masking import MaskingPolicy, apply_mlm_mask
from desklm.pretrain.objectives import (
    PretrainLossWeights,
    combine_pretrain_losses,
    init_pretrain_heads,
    mlm_loss,
    pair_loss,
    tagging_loss,
)
from desklm.pretrain.pairs import MODE_NSP, MODE_SOP, build_pair_example
from desklm.pretrain.schedule import StageSpec, TrainingSchedule, curriculum_stage, desk_schedule

__all__ = [
    "MaskingPolicy",
    "apply_mlm_mask",
    "PretrainLossWeights",
    "combine_pretrain_losses",
    "init_pretrain_heads",
    "mlm_loss",
    "pair_loss",
    "tagging_loss",
    "MODE_NSP",
    "MODE_SOP",
    "build_pair_example",
    "StageSpec",
    "TrainingSchedule",
    "curriculum_stage",
    "desk_schedule",
]
