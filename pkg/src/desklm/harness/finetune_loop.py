"""Task fine-tuning loop with pluggable training strategies.

One loop serves all three head kinds. Strategies compose additively on top
of the task loss: hidden-state distillation from a frozen teacher, the
adversarial smoothness penalty, and label smoothing for multi-choice
scoring; transfer initialization and data merging act before the first
step. With every strategy disabled the loop reduces exactly to the plain
task objective, and reruns are bitwise reproducible from (RunConfig, seed).
"""

import math
from pathlib import Path

import numpy as np

from ..errors import ConfigError, InputError, NumericsError
from ..finetune import (
    KIND_CLASSIFICATION,
    KIND_MULTICHOICE,
    KIND_SPAN,
    SPAN_MASK_BIAS,
    choice_scores,
    choice_smoothing_loss,
    classification_logits,
    decode_span,
    init_task_heads,
    kd_loss,
    mask_non_passage,
    passage_positions,
    smart_regularizer,
    span_logits,
    transfer_init,
    merge_extra_data,
)
from ..model.encoder import embed_batch, encoder_forward, init_parameters, pool_cls
from ..optim import LrSchedule, OptState, adamw_step, lr_at
from ..tensor import as_value, backward, cross_entropy, reshape
from .batching import pack_choice_batch, pack_cls_batch, pack_span_batch
from .checkpoint import check_geometry, load_checkpoint
from .metrics import MetricsWriter, aggregate_span_scores
from .runconfig import RunConfig
from .synth import load_task_data

__all__ = [
    "run_finetune",
    "predict_classification",
    "predict_choice",
    "predict_spans",
]

_DATA_KIND = {KIND_CLASSIFICATION: "cls", KIND_SPAN: "span", KIND_MULTICHOICE: "choice"}


def _span_bias(batch):
    return np.where(passage_positions(batch), 0.0, SPAN_MASK_BIAS)


def _forward_logits(params, batch, config, spec, rng=None, train=False, inputs_embeds=None):
    """Task logits for one packed batch; span returns (start, end) with the
    non-passage bias already applied."""
    hidden, _ = encoder_forward(params, batch, config, rng=rng, train=train,
                                inputs_embeds=inputs_embeds)
    if spec.kind == KIND_SPAN:
        start, end = span_logits(hidden, params)
        bias = as_value(_span_bias(batch))
        return hidden, (start + bias, end + bias)
    pooled = pool_cls(hidden, params)
    if spec.kind == KIND_CLASSIFICATION:
        return hidden, classification_logits(pooled, params)
    rows = batch.token_ids.shape[0]
    scores = choice_scores(pooled, params)
    return hidden, reshape(scores, (rows // spec.num_choices, spec.num_choices))


def _pack(records, spec):
    if spec.kind == KIND_CLASSIFICATION:
        return pack_cls_batch(records, spec.max_len)
    if spec.kind == KIND_SPAN:
        return pack_span_batch(records, spec.max_len)
    return pack_choice_batch(records, spec.num_choices, spec.max_len)


def _task_loss(logits, targets, spec, smoothing):
    if spec.kind == KIND_SPAN:
        start, end = logits
        return 0.5 * (cross_entropy(start, targets[:, 0]) + cross_entropy(end, targets[:, 1]))
    if spec.kind == KIND_MULTICHOICE and smoothing.enabled:
        return choice_smoothing_loss(logits, targets, weights=(smoothing.ce_weight, smoothing.bce_weight))
    return cross_entropy(logits, targets)


def _eval_metrics(params, config, spec, records, batch_rows):
    if spec.kind == KIND_SPAN:
        pairs = []
        for i in range(0, len(records), batch_rows):
            chunk = records[i : i + batch_rows]
            batch, gold = pack_span_batch(chunk, spec.max_len)
            hidden, _ = encoder_forward(params, batch, config)
            start, end = span_logits(hidden, params)
            passage = passage_positions(batch)
            s = mask_non_passage(start.data, passage)
            e = mask_non_passage(end.data, passage)
            for j in range(len(chunk)):
                pairs.append((decode_span(s[j], e[j]), (int(gold[j, 0]), int(gold[j, 1]))))
        return aggregate_span_scores(pairs)
    kind = "classification" if spec.kind == KIND_CLASSIFICATION else "multichoice"
    predict = predict_classification if kind == "classification" else predict_choice
    pred = predict(params, config, spec, records, batch_rows=batch_rows)
    gold = np.asarray([int(r["label"]) for r in records])
    return {"accuracy": float((pred == gold).mean())}


def predict_classification(params, config, spec, records, batch_rows=16):
    """Argmax class labels for classification records; returns [N] int array."""
    out = []
    for i in range(0, len(records), batch_rows):
        batch, _ = pack_cls_batch(records[i : i + batch_rows], spec.max_len)
        _, logits = _forward_logits(params, batch, config, spec)
        out.append(logits.data.argmax(axis=-1))
    return np.concatenate(out)


def predict_choice(params, config, spec, records, batch_rows=16):
    """Argmax choice indices for multi-choice records; returns [N] int array."""
    out = []
    for i in range(0, len(records), batch_rows):
        batch, _ = pack_choice_batch(records[i : i + batch_rows], spec.num_choices, spec.max_len)
        _, logits = _forward_logits(params, batch, config, spec)
        out.append(logits.data.argmax(axis=-1))
    return np.concatenate(out)


def predict_spans(params, config, spec, records, batch_rows=16):
    """Decoded (start, end) row-coordinate spans; returns (pred [N,2], gold [N,2])."""
    preds, golds = [], []
    for i in range(0, len(records), batch_rows):
        chunk = records[i : i + batch_rows]
        batch, gold = pack_span_batch(chunk, spec.max_len)
        hidden, _ = encoder_forward(params, batch, config)
        start, end = span_logits(hidden, params)
        passage = passage_positions(batch)
        s = mask_non_passage(start.data, passage)
        e = mask_non_passage(end.data, passage)
        for j in range(len(chunk)):
            preds.append(decode_span(s[j], e[j]))
            golds.append((int(gold[j, 0]), int(gold[j, 1])))
    return np.asarray(preds, dtype=np.int64), np.asarray(golds, dtype=np.int64)


def run_finetune(config: RunConfig) -> dict:
    """Fine-tune from an init checkpoint; writes finetuned.mzck and metrics.jsonl."""
    from .checkpoint import save_checkpoint

    if config.mode != "finetune":
        raise ConfigError(f"run_finetune needs mode 'finetune', got {config.mode!r}")
    spec = config.task
    model_cfg = config.model
    spec.validate_against(model_cfg)
    strategies = config.strategies
    missing = [k for k in ("data", "out") if not config.paths.get(k)]
    if missing:
        raise ConfigError(f"finetune config needs paths {missing}")

    init_path = strategies.transfer.source_path or config.paths.get("init")
    if not init_path:
        raise ConfigError("fine-tuning needs an init checkpoint (paths['init'] or transfer.source_path)")
    source_params, source_cfg = load_checkpoint(init_path)
    check_geometry(source_cfg, model_cfg, "init")

    teacher = None
    if strategies.kd.enabled:
        teacher_path = config.paths.get("teacher")
        if not teacher_path:
            raise ConfigError("distillation needs paths['teacher']")
        teacher_params, teacher_cfg = load_checkpoint(teacher_path)
        check_geometry(teacher_cfg, model_cfg, "teacher")
        teacher = (teacher_params, teacher_cfg)

    data_kind = _DATA_KIND[spec.kind]
    records = load_task_data(config.paths["data"], data_kind)
    extras = [load_task_data(p, data_kind) for p in strategies.augmentation.extra_paths]
    if extras:
        records = merge_extra_data(records, extras, seed=config.seed)
    eval_records = records
    if config.paths.get("eval"):
        eval_records = load_task_data(config.paths["eval"], data_kind)

    params = init_parameters(model_cfg, seed=config.seed)
    params.merge(init_task_heads(model_cfg, spec, seed=config.seed + 1))
    params, report = transfer_init(params, source_params,
                                   reinit_head=strategies.transfer.reinit_head)

    ft = config.finetune
    n = len(records)
    steps_per_epoch = math.ceil(n / ft.batch_size)
    total_steps = ft.epochs * steps_per_epoch
    lr_schedule = LrSchedule(ft.lr, total_steps, warmup_fraction=0.1)
    state = OptState(params, weight_decay=config.weight_decay)

    out_dir = Path(config.paths["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.jsonl"
    ckpt_path = out_dir / "finetuned.mzck"
    last_eval = {}

    with MetricsWriter(metrics_path) as log:
        step = 0
        for epoch in range(ft.epochs):
            order = np.random.default_rng([config.seed, 11, epoch]).permutation(n)
            for b in range(steps_per_epoch):
                idx = order[b * ft.batch_size : (b + 1) * ft.batch_size]
                chunk = [records[i] for i in idx]
                batch, targets = _pack(chunk, spec)

                rng = np.random.default_rng([config.seed, 17, step]) if model_cfg.dropout > 0 else None
                hidden, logits = _forward_logits(params, batch, model_cfg, spec,
                                                 rng=rng, train=model_cfg.dropout > 0)
                parts = {"task": _task_loss(logits, targets, spec, strategies.smoothing)}
                total = parts["task"]

                if teacher is not None:
                    t_hidden, _ = encoder_forward(teacher[0], batch, teacher[1])
                    parts["kd"] = kd_loss(t_hidden.data, hidden, strategies.kd.temperature)
                    total = total + strategies.kd.weight * parts["kd"]
                if strategies.smart.enabled:
                    embeds = embed_batch(params, batch, model_cfg)

                    def model_fn(e, _batch=batch, _spec=spec):
                        _, out = _forward_logits(params, _batch, model_cfg, _spec, inputs_embeds=e)
                        return out[0] if _spec.kind == KIND_SPAN else out

                    smart_rng = np.random.default_rng([config.seed, 13, step])
                    parts["smart"] = smart_regularizer(model_fn, embeds, strategies.smart, smart_rng)
                    total = total + strategies.smart.weight * parts["smart"]

                loss_out = {name: float(v.data) for name, v in parts.items()}
                loss_out.setdefault("kd", 0.0)
                loss_out.setdefault("smart", 0.0)
                bad = {k: v for k, v in loss_out.items() if not np.isfinite(v)}
                if bad:
                    raise NumericsError(f"step {step}: non-finite loss parts {bad}; "
                                        f"epoch {epoch + 1}, lr {lr_at(step, lr_schedule)}")
                loss_out["total"] = float(total.data)

                params.clear_grads()
                backward(total)
                grads = {name: v.grad_or_zeros() for name, v in params.items()}
                lr = lr_at(step, lr_schedule)
                try:
                    adamw_step(params, grads, state, lr)
                except NumericsError as e:
                    raise NumericsError(f"step {step}: {e}") from e

                eval_out = {}
                if b == steps_per_epoch - 1:
                    last_eval = _eval_metrics(params, model_cfg, spec, eval_records,
                                              config.eval_batch_rows)
                    eval_out = last_eval
                log.write({"step": step, "stage": epoch + 1, "lr": lr,
                           "losses": loss_out, "eval": eval_out})
                step += 1

    save_checkpoint(params, model_cfg, ckpt_path,
                    metadata={"mode": "finetune", "task": spec.kind, "seed": config.seed,
                              "epochs": ft.epochs})
    return {"checkpoint": str(ckpt_path), "metrics": str(metrics_path),
            "final_eval": last_eval,
            "transfer": {"loaded": len(report.loaded),
                         "reinitialized": len(report.reinitialized),
                         "skipped": len(report.skipped)}}
