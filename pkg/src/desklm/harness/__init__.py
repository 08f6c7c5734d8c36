"""Training harness: checkpoints, run configs, loops, synthetic data, CLI."""

from .batching import (
    build_pretrain_batch,
    pack_choice_batch,
    pack_cls_batch,
    pack_span_batch,
    pair_mode_for,
)
from .checkpoint import (
    MAGIC,
    VERSION,
    check_geometry,
    load_checkpoint,
    read_checkpoint_metadata,
    save_checkpoint,
)
from .cli import build_parser, main
from .finetune_loop import (
    predict_choice,
    predict_classification,
    predict_spans,
    run_finetune,
)
from .metrics import MetricsWriter, aggregate_span_scores, span_em_f1
from .pretrain_loop import run_pretrain
from .runconfig import (
    FINETUNE_BATCH_GRID,
    FINETUNE_EPOCH_RANGE,
    FINETUNE_LR_GRID,
    FinetuneParams,
    RunConfig,
)
from .synth import (
    SynthPattern,
    load_task_data,
    make_ne_set,
    make_synthetic_choice,
    make_synthetic_classification,
    make_synthetic_corpus,
    make_synthetic_span,
    ne_tag_of,
    pos_tag_of,
    successor,
    write_task_data,
)
from .verify import SUITES, run_suite

__all__ = [
    "MAGIC",
    "VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "read_checkpoint_metadata",
    "check_geometry",
    "RunConfig",
    "FinetuneParams",
    "FINETUNE_LR_GRID",
    "FINETUNE_BATCH_GRID",
    "FINETUNE_EPOCH_RANGE",
    "run_pretrain",
    "run_finetune",
    "predict_classification",
    "predict_choice",
    "predict_spans",
    "build_pretrain_batch",
    "pack_cls_batch",
    "pack_span_batch",
    "pack_choice_batch",
    "pair_mode_for",
    "span_em_f1",
    "aggregate_span_scores",
    "MetricsWriter",
    "SynthPattern",
    "successor",
    "pos_tag_of",
    "ne_tag_of",
    "make_ne_set",
    "make_synthetic_corpus",
    "make_synthetic_classification",
    "make_synthetic_span",
    "make_synthetic_choice",
    "write_task_data",
    "load_task_data",
    "SUITES",
    "run_suite",
    "build_parser",
    "main",
]
