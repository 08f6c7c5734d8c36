"""Pre-training losses and their weighted combination.

The masked-prediction decoder is weight-tied to the input embedding matrix;
only a per-vocabulary output bias is a free head parameter.  Tagging heads are
single linear maps over per-token states.  Pair heads score the pooled first
position.  All losses are mean cross-entropy over non-ignored labels.
"""

from dataclasses import dataclass, fields

import numpy as np

from ..errors import ConfigError, ContractError, InputError, ShapeError
from ..model.config import ModelConfig
from ..model.encoder import truncated_normal
from ..tensor.value import (
    IGNORE_INDEX,
    ParamStore,
    Value,
    as_value,
    cross_entropy,
    matmul,
    reshape,
    transpose,
)

__all__ = [
    "PretrainLossWeights",
    "init_pretrain_heads",
    "mlm_loss",
    "tagging_loss",
    "pair_loss",
    "combine_pretrain_losses",
]


@dataclass(frozen=True)
class PretrainLossWeights:
    """Per-objective weights; order mode on and next-segment off by default."""

    mlm: float = 1.0
    nsp: float = 0.0
    sop: float = 1.0
    pos: float = 1.0
    ne: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"loss weight {f.name} must be nonnegative")
        if self.mlm <= 0:
            raise ConfigError("mlm weight must be positive")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def init_pretrain_heads(
    config: ModelConfig, seed: int, pos_tagset: int = 8, ne_tagset: int = 2, std: float = 0.02
) -> ParamStore:
    """Free head parameters for pre-training (decoder weights stay tied)."""
    rng = np.random.default_rng(seed)
    heads = ParamStore()
    heads.add("heads.mlm.bias", as_value(np.zeros(config.vocab_size)))
    for name, width in (("nsp", 2), ("sop", 2), ("pos", pos_tagset), ("ne", ne_tagset)):
        heads.add(f"heads.{name}.weight", as_value(truncated_normal(rng, (config.hidden, width), std)))
        heads.add(f"heads.{name}.bias", as_value(np.zeros(width)))
    return heads


def mlm_loss(hidden: Value, mlm_labels: np.ndarray, params: ParamStore) -> Value:
    """Mean CE of tied-decoder logits at labeled positions; 0 when none."""
    b, t, h = hidden.shape
    tok = params["embeddings.token"]
    if tok.shape[1] != h:
        raise ShapeError(f"hidden width {h} does not match embedding width {tok.shape[1]}")
    flat = reshape(hidden, (b * t, h))
    logits = matmul(flat, transpose(tok, (1, 0))) + params["heads.mlm.bias"]
    return cross_entropy(logits, np.asarray(mlm_labels, dtype=np.int64).reshape(b * t))


def tagging_loss(hidden: Value, labels: np.ndarray, head_params: dict, tagset_size: int) -> Value:
    """Mean CE of a linear per-token head; ignore-marker positions excluded."""
    b, t, h = hidden.shape
    weight, bias = head_params["weight"], head_params["bias"]
    if weight.shape != (h, tagset_size):
        raise ShapeError(
            f"tag head weight {weight.shape} does not match (hidden, tagset) ({h}, {tagset_size})"
        )
    labels = np.asarray(labels, dtype=np.int64).reshape(b * t)
    real = labels[labels != IGNORE_INDEX]
    if real.size and (real.min() < 0 or real.max() >= tagset_size):
        raise InputError(f"tag labels must lie in [0, {tagset_size}), got [{real.min()}, {real.max()}]")
    logits = matmul(reshape(hidden, (b * t, h)), weight) + bias
    return cross_entropy(logits, labels)


def pair_loss(pooled: Value, labels: np.ndarray, head_params: dict) -> Value:
    """Binary pair objective over pooled states: CE of a 2-way linear head."""
    logits = matmul(pooled, head_params["weight"]) + head_params["bias"]
    return cross_entropy(logits, np.asarray(labels, dtype=np.int64))


def combine_pretrain_losses(parts: dict, weights: PretrainLossWeights) -> Value:
    """Weighted sum of named scalar losses.

    Zero-weight parts are omitted from the graph entirely, so their gradients
    are exactly zero.  A positive weight with a missing part is a contract
    violation.
    """
    total = None
    for name, w in weights.as_dict().items():
        if w == 0:
            continue
        if name not in parts:
            raise ContractError(f"loss part {name!r} has weight {w} but was not provided")
        term = parts[name] * w
        total = term if total is None else total + term
    return total
