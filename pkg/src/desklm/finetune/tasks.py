"""Downstream task plumbing: specs, input packing, and head constructions.

Span inputs follow [CLS] question [SEP] passage [SEP] with the passage in
segment 1 and truncated first under length pressure.  Multi-choice inputs
repeat the question once per candidate with a separator between question and
candidate, scored by a linear head on the pooled first position.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InputError
from ..model.config import CLS_ID, PAD_ID, SEP_ID, ModelConfig, TokenizedBatch
from ..model.encoder import truncated_normal
from ..tensor.value import ParamStore, Value, as_value, matmul, reshape

__all__ = [
    "TaskSpec",
    "pack_span_input",
    "pack_multichoice",
    "pad_rows",
    "init_task_heads",
    "classification_logits",
    "choice_scores",
    "passage_positions",
]

KIND_CLASSIFICATION = "classification"
KIND_SPAN = "span"
KIND_MULTICHOICE = "multichoice"
_DEFAULT_MAX_LEN = {KIND_SPAN: 384, KIND_CLASSIFICATION: 256, KIND_MULTICHOICE: 256}


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    num_classes: int | None = None
    num_choices: int | None = None
    max_len: int | None = None

    def __post_init__(self):
        if self.kind not in _DEFAULT_MAX_LEN:
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.max_len is None:
            object.__setattr__(self, "max_len", _DEFAULT_MAX_LEN[self.kind])
        if self.max_len < 8:
            raise ConfigError(f"max_len {self.max_len} is too small to pack anything")
        if self.kind == KIND_CLASSIFICATION and (self.num_classes is None or self.num_classes < 2):
            raise ConfigError("classification needs num_classes >= 2")
        if self.kind == KIND_MULTICHOICE and (self.num_choices is None or self.num_choices < 2):
            raise ConfigError("multichoice needs num_choices >= 2")

    def validate_against(self, config: ModelConfig) -> None:
        if self.max_len > config.max_positions:
            raise ConfigError(
                f"task max_len {self.max_len} exceeds model max_positions {config.max_positions}"
            )


def _ids(x, what: str) -> list:
    out = [int(t) for t in np.asarray(x).ravel()]
    if not out:
        raise InputError(f"{what} must be non-empty")
    return out


def pack_span_input(question_ids, passage_ids, max_len: int) -> TokenizedBatch:
    """One packed row: [CLS] Q [SEP] P [SEP]; passage truncated to fit."""
    q = _ids(question_ids, "question")
    p = _ids(passage_ids, "passage")
    budget = max_len - 3 - len(q)
    if budget < 1:
        raise InputError(f"question of {len(q)} ids leaves no passage room at max_len {max_len}")
    p = p[:budget]
    tokens = [CLS_ID, *q, SEP_ID, *p, SEP_ID]
    segments = [0] * (len(q) + 2) + [1] * (len(p) + 1)
    return TokenizedBatch(
        token_ids=np.array([tokens], dtype=np.int64),
        segment_ids=np.array([segments], dtype=np.int64),
        attn_mask=np.ones((1, len(tokens)), dtype=np.int64),
    )


def pack_multichoice(question_ids, choices, passage_ids, max_len: int) -> TokenizedBatch:
    """K rows [CLS] Q [SEP] choice_k [SEP] P [SEP], padded to a common length."""
    if len(choices) < 2:
        raise InputError(f"need at least 2 choices, got {len(choices)}")
    q = _ids(question_ids, "question")
    p = _ids(passage_ids, "passage")
    rows = []
    for k, choice in enumerate(choices):
        c = _ids(choice, f"choice {k}")
        budget = max_len - 4 - len(q) - len(c)
        if budget < 1:
            raise InputError(
                f"question+choice of {len(q)}+{len(c)} ids leave no passage room at max_len {max_len}"
            )
        pk = p[:budget]
        tokens = [CLS_ID, *q, SEP_ID, *c, SEP_ID, *pk, SEP_ID]
        segments = [0] * (len(q) + len(c) + 3) + [1] * (len(pk) + 1)
        rows.append(
            TokenizedBatch(
                token_ids=np.array([tokens], dtype=np.int64),
                segment_ids=np.array([segments], dtype=np.int64),
                attn_mask=np.ones((1, len(tokens)), dtype=np.int64),
            )
        )
    return pad_rows(rows)


def pad_rows(rows: list, length: int | None = None) -> TokenizedBatch:
    """Stack (1,T_i) rows into one batch, padding with PAD id and mask 0."""
    if not rows:
        raise InputError("no rows to pad")
    t = max(r.token_ids.shape[1] for r in rows)
    if length is not None:
        if length < t:
            raise InputError(f"pad length {length} shorter than longest row {t}")
        t = length
    n = len(rows)
    tokens = np.full((n, t), PAD_ID, dtype=np.int64)
    segments = np.zeros((n, t), dtype=np.int64)
    mask = np.zeros((n, t), dtype=np.int64)
    for i, r in enumerate(rows):
        w = r.token_ids.shape[1]
        tokens[i, :w] = r.token_ids[0]
        segments[i, :w] = r.segment_ids[0]
        mask[i, :w] = r.attn_mask[0]
    labels = {}
    if all(r.mlm_labels is not None for r in rows):
        lab = np.full((n, t), -100, dtype=np.int64)
        for i, r in enumerate(rows):
            lab[i, : r.token_ids.shape[1]] = r.mlm_labels[0]
        labels["mlm_labels"] = lab
    return TokenizedBatch(token_ids=tokens, segment_ids=segments, attn_mask=mask, **labels)


def passage_positions(batch: TokenizedBatch) -> np.ndarray:
    """Boolean [B,T] marking passage content (segment 1, real, not a separator)."""
    return (batch.segment_ids == 1) & (batch.attn_mask == 1) & (batch.token_ids != SEP_ID)


def init_task_heads(config: ModelConfig, spec: TaskSpec, seed: int, std: float = 0.02) -> ParamStore:
    rng = np.random.default_rng(seed)
    heads = ParamStore()
    if spec.kind == KIND_CLASSIFICATION:
        heads.add("heads.cls.weight", as_value(truncated_normal(rng, (config.hidden, spec.num_classes), std)))
        heads.add("heads.cls.bias", as_value(np.zeros(spec.num_classes)))
    elif spec.kind == KIND_SPAN:
        for side in ("start", "end"):
            heads.add(f"heads.span.{side}.weight", as_value(truncated_normal(rng, (config.hidden, 1), std)))
            heads.add(f"heads.span.{side}.bias", as_value(np.zeros(1)))
    else:
        heads.add("heads.choice.weight", as_value(truncated_normal(rng, (config.hidden, 1), std)))
        heads.add("heads.choice.bias", as_value(np.zeros(1)))
    return heads


def classification_logits(pooled: Value, params: ParamStore) -> Value:
    return matmul(pooled, params["heads.cls.weight"]) + params["heads.cls.bias"]


def choice_scores(pooled: Value, params: ParamStore) -> Value:
    """Score each of the K pooled rows; returns a length-K vector."""
    k = pooled.shape[0]
    scored = matmul(pooled, params["heads.choice.weight"]) + params["heads.choice.bias"]
    return reshape(scored, (k,))
