"""The two-stage pre-training loop.

Wires the corpus sampler, pair/masking batch assembly, the multi-task
objective, the layer-wise adaptive optimizer with linear warmup/decay, and
periodic held-out evaluation of masked-token and pair-order accuracy.
Every run is reproducible from (RunConfig, seed): checkpoints are bitwise
equal and metrics logs line-equal across reruns.
"""

from collections import deque
from pathlib import Path

import numpy as np

from ..corpus import global_sample, read_corpus
from ..errors import ConfigError, InputError, NumericsError
from ..model.config import ModelConfig
from ..model.encoder import encoder_forward, init_parameters, pool_cls
from ..optim import GRAD_TRANSFORMS, LrSchedule, OptState, lamb_step, lr_at
from ..pretrain import (
    MaskingPolicy,
    combine_pretrain_losses,
    curriculum_stage,
    init_pretrain_heads,
    mlm_loss,
    pair_loss,
    tagging_loss,
)
from ..tensor import IGNORE_INDEX, backward
from .batching import build_pretrain_batch, pair_mode_for
from .checkpoint import save_checkpoint
from .metrics import MetricsWriter
from .runconfig import RunConfig
from .synth import make_ne_set

__all__ = ["run_pretrain"]

_SEED_STRIDE = 1_048_576  # > any desk batch size, keeps per-row pair seeds distinct


class _WindowStream:
    """Epoch-chaining window source for one curriculum stage."""

    def __init__(self, articles, schedule, stage_id, seed):
        self.articles = articles
        self.schedule = schedule
        self.stage_id = stage_id
        self.seed = seed
        self.epoch = 0
        self.queue = deque()

    def take(self, count):
        out = []
        while len(out) < count:
            if not self.queue:
                windows = global_sample(self.articles, self.schedule, self.epoch,
                                        self.seed, stage_id=self.stage_id)
                if not windows:
                    raise InputError(
                        f"corpus yields no stage-{self.stage_id} windows; articles are too short"
                    )
                self.queue.extend(windows)
                self.epoch += 1
            out.append(self.queue.popleft())
        return out


def _head(params, name):
    return {"weight": params[f"heads.{name}.weight"], "bias": params[f"heads.{name}.bias"]}


def _forward_losses(params, batch, config, weights, pair_mode, rng=None):
    train = config.dropout > 0.0
    hidden, _ = encoder_forward(params, batch, config, rng=rng, train=train)
    parts = {"mlm": mlm_loss(hidden, batch.mlm_labels, params)}
    if pair_mode is not None:
        pooled = pool_cls(hidden, params)
        parts[pair_mode] = pair_loss(pooled, batch.pair_label, _head(params, pair_mode))
    if weights.pos > 0:
        parts["pos"] = tagging_loss(hidden, batch.pos_labels, _head(params, "pos"), config.pos_tagset)
    if weights.ne > 0:
        parts["ne"] = tagging_loss(hidden, batch.ne_labels, _head(params, "ne"), config.ne_tagset)
    return hidden, parts


def _build_eval_batches(articles, schedule, config, policy_seed, pair_mode, ne_ids,
                        max_rows, stage_id):
    """Deterministic held-out batches at the requested stage's length."""
    windows = global_sample(articles, schedule, epoch=0, seed=policy_seed, stage_id=stage_id)
    if not windows:
        raise InputError("held-out articles yield no evaluation windows")
    windows = windows[: 4 * max_rows]
    seq_len = schedule.stage1_len if stage_id == 1 else schedule.stage2_len
    policy = MaskingPolicy(seed=policy_seed)
    batches = []
    for i in range(0, len(windows), max_rows):
        chunk = windows[i : i + max_rows]
        batches.append(build_pretrain_batch(chunk, seq_len, config, policy,
                                            pair_mode, pair_seed_base=policy_seed + i, ne_ids=ne_ids))
    return batches


def _evaluate(params, batches, config, pair_mode):
    token_w = params["embeddings.token"].data
    mlm_bias = params["heads.mlm.bias"].data
    correct = labeled_total = 0
    pair_correct = pair_total = 0
    for batch in batches:
        hidden, _ = encoder_forward(params, batch, config)
        flat = hidden.data.reshape(-1, config.hidden)
        pred = (flat @ token_w.T + mlm_bias).argmax(axis=-1).reshape(batch.token_ids.shape)
        labeled = batch.mlm_labels != IGNORE_INDEX
        correct += int((pred[labeled] == batch.mlm_labels[labeled]).sum())
        labeled_total += int(labeled.sum())
        if pair_mode is not None:
            pooled = pool_cls(hidden, params).data
            w, b = params[f"heads.{pair_mode}.weight"].data, params[f"heads.{pair_mode}.bias"].data
            pair_pred = (pooled @ w + b).argmax(axis=-1)
            pair_correct += int((pair_pred == batch.pair_label).sum())
            pair_total += batch.batch_size
    out = {"mlm_accuracy": correct / max(labeled_total, 1)}
    if pair_mode is not None:
        out[f"{pair_mode}_accuracy"] = pair_correct / max(pair_total, 1)
    return out


def run_pretrain(config: RunConfig) -> dict:
    """Execute the full curriculum; writes checkpoint.mzck and metrics.jsonl."""
    if config.mode != "pretrain":
        raise ConfigError(f"run_pretrain needs mode 'pretrain', got {config.mode!r}")
    model_cfg: ModelConfig = config.model
    schedule = config.schedule
    if config.grad_transform not in GRAD_TRANSFORMS:
        raise ConfigError(f"unknown grad transform {config.grad_transform!r}")
    transform = GRAD_TRANSFORMS[config.grad_transform]
    missing = [k for k in ("corpus", "out") if not config.paths.get(k)]
    if missing:
        raise ConfigError(f"pretrain config needs paths {missing}")

    out_dir = Path(config.paths["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = read_corpus(config.paths["corpus"])
    if len(corpus) < 2:
        raise InputError("pre-training needs at least 2 articles (held-out split)")
    heldout = max(1, min(len(corpus) // 10, 8))
    eval_articles, train_articles = corpus[:heldout], corpus[heldout:]

    weights = config.loss_weights
    pair_mode = pair_mode_for(weights)
    ne_ids = make_ne_set(config.seed, model_cfg.vocab_size)

    params = init_parameters(model_cfg, seed=config.seed)
    params.merge(init_pretrain_heads(model_cfg, seed=config.seed + 1,
                                     pos_tagset=model_cfg.pos_tagset,
                                     ne_tagset=model_cfg.ne_tagset))
    state = OptState(params, weight_decay=config.weight_decay, lr_peak=config.lr_peak)
    lr_schedule = LrSchedule(config.lr_peak, schedule.total_steps, schedule.warmup_fraction)

    # evaluation follows the active stage's length so the final numbers
    # describe the model at its operating point
    eval_sets = {}

    def eval_batches_for(stage_id):
        if stage_id not in eval_sets:
            eval_sets[stage_id] = _build_eval_batches(
                eval_articles, schedule, model_cfg, policy_seed=config.seed + 777,
                pair_mode=pair_mode, ne_ids=ne_ids, max_rows=config.eval_batch_rows,
                stage_id=stage_id)
        return eval_sets[stage_id]

    metrics_path = out_dir / "metrics.jsonl"
    ckpt_path = out_dir / "checkpoint.mzck"
    stream = None
    current_stage = None
    last_eval = {}
    with MetricsWriter(metrics_path) as log:
        for step in range(schedule.total_steps):
            stage = curriculum_stage(step, schedule)
            if stage.stage_id != current_stage:
                stream = _WindowStream(train_articles, schedule, stage.stage_id, config.seed)
                current_stage = stage.stage_id
            windows = stream.take(stage.batch_size)
            policy = MaskingPolicy(seed=(config.seed * 1_000_003 + step) % 2**63)
            pair_base = (config.seed + 1) * 2_000_003 + step * _SEED_STRIDE
            batch = build_pretrain_batch(windows, stage.seq_len, model_cfg, policy, pair_mode,
                                         pair_seed_base=pair_base, ne_ids=ne_ids)
            rng = np.random.default_rng([config.seed, 17, step]) if model_cfg.dropout > 0 else None
            _, parts = _forward_losses(params, batch, model_cfg, weights, pair_mode, rng=rng)

            part_values = {name: float(v.data) for name, v in parts.items()}
            bad = {name: v for name, v in part_values.items() if not np.isfinite(v)}
            if bad:
                raise NumericsError(f"step {step}: non-finite loss parts {bad}; "
                                    f"stage {stage.stage_id}, lr {lr_at(step, lr_schedule)}")
            total = combine_pretrain_losses(parts, weights)

            params.clear_grads()
            backward(total)
            grads = transform({name: v.grad_or_zeros() for name, v in params.items()})
            lr = lr_at(step, lr_schedule)
            try:
                lamb_step(params, grads, state, lr)
            except NumericsError as e:
                raise NumericsError(f"step {step}: {e}") from e

            is_eval_step = (config.eval_every > 0 and (step + 1) % config.eval_every == 0)
            if is_eval_step or step == schedule.total_steps - 1:
                last_eval = _evaluate(params, eval_batches_for(stage.stage_id), model_cfg, pair_mode)
                eval_out = last_eval
            else:
                eval_out = {}
            part_values["total"] = float(total.data)
            log.write({"step": step, "stage": stage.stage_id, "lr": lr,
                       "losses": part_values, "eval": eval_out})

    save_checkpoint(params, model_cfg, ckpt_path,
                    metadata={"mode": "pretrain", "seed": config.seed,
                              "total_steps": schedule.total_steps})
    return {"checkpoint": str(ckpt_path), "metrics": str(metrics_path), "final_eval": last_eval}
