"""Encoder geometry and the padded batch record consumed by the forward pass."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from desklm.errors import ConfigError, InputError
from desklm.tensor import IGNORE_INDEX

# Reserved token ids, shared by every desk-scale vocabulary.
PAD_ID = 0
CLS_ID = 1
SEP_ID = 2
MASK_ID = 3
SPECIAL_IDS = (PAD_ID, CLS_ID, SEP_ID, MASK_ID)
FIRST_CONTENT_ID = 4


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden: int
    layers: int
    heads: int
    intermediate: int
    max_positions: int
    type_vocab: int = 2
    pos_tagset: int = 8
    ne_tagset: int = 4
    eps: float = 1e-12
    dropout: float = 0.1

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ConfigError(f"hidden={self.hidden} not divisible by heads={self.heads}")
        for name in ("vocab_size", "hidden", "layers", "heads", "intermediate",
                     "max_positions", "type_vocab", "pos_tagset", "ne_tagset"):
            if getattr(self, name) < 0 or (name not in ("layers",) and getattr(self, name) == 0):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def full_size_config() -> ModelConfig:
    """The published full-size geometry; used for counting checks only."""
    return ModelConfig(
        vocab_size=21128,
        hidden=768,
        layers=12,
        heads=12,
        intermediate=3072,
        max_positions=512,
    )


def desk_config(vocab_size=64, hidden=32, layers=2, heads=4, intermediate=64,
                max_positions=64, pos_tagset=8, ne_tagset=4, dropout=0.0) -> ModelConfig:
    """Miniature geometry for tests and desk-scale training."""
    return ModelConfig(
        vocab_size=vocab_size,
        hidden=hidden,
        layers=layers,
        heads=heads,
        intermediate=intermediate,
        max_positions=max_positions,
        pos_tagset=pos_tagset,
        ne_tagset=ne_tagset,
        dropout=dropout,
    )


@dataclass
class TokenizedBatch:
    """Padded integer batch with one label channel per training objective.

    Label grids use IGNORE_INDEX (-100) for positions that carry no label.
    Optional channels stay None when the objective is unused.
    """

    token_ids: np.ndarray          # [B, T] int
    segment_ids: np.ndarray        # [B, T] int
    attn_mask: np.ndarray          # [B, T] 0/1
    mlm_labels: np.ndarray | None = None   # [B, T] int with ignore marker
    pair_label: np.ndarray | None = None   # [B] int
    pos_labels: np.ndarray | None = None   # [B, T] int with ignore marker
    ne_labels: np.ndarray | None = None    # [B, T] int with ignore marker
    task_label: np.ndarray | None = None   # [B] int

    def __post_init__(self):
        self.token_ids = np.asarray(self.token_ids, dtype=np.int64)
        self.segment_ids = np.asarray(self.segment_ids, dtype=np.int64)
        self.attn_mask = np.asarray(self.attn_mask, dtype=np.int64)
        for name in ("mlm_labels", "pair_label", "pos_labels", "ne_labels", "task_label"):
            v = getattr(self, name)
            if v is not None:
                setattr(self, name, np.asarray(v, dtype=np.int64))

    @property
    def batch_size(self) -> int:
        return self.token_ids.shape[0]

    @property
    def seq_len(self) -> int:
        return self.token_ids.shape[1]

    def validate(self, config: ModelConfig) -> None:
        b, t = self.token_ids.shape
        if t > config.max_positions:
            raise InputError(f"sequence length {t} exceeds max_positions {config.max_positions}")
        for name in ("segment_ids", "attn_mask"):
            if getattr(self, name).shape != (b, t):
                raise InputError(f"{name} shape {getattr(self, name).shape} != {(b, t)}")
        if not np.isin(self.attn_mask, (0, 1)).all():
            raise InputError("attn_mask must be 0/1")
        if self.token_ids.min() < 0 or self.token_ids.max() >= config.vocab_size:
            raise InputError(f"token id out of range [0, {config.vocab_size})")
        if self.segment_ids.min() < 0 or self.segment_ids.max() >= config.type_vocab:
            raise InputError(f"segment id out of range [0, {config.type_vocab})")
        if self.mlm_labels is not None:
            if self.mlm_labels.shape != (b, t):
                raise InputError(f"mlm_labels shape {self.mlm_labels.shape} != {(b, t)}")
            labeled = self.mlm_labels != IGNORE_INDEX
            if (labeled & (self.attn_mask == 0)).any():
                raise InputError("labeled MLM position with attn_mask 0")
