"""Fine-tuning strategy mechanisms and their configuration.

Five composable pieces: hidden-state distillation, choice-label smoothing,
smoothness-inducing adversarial regularization, checkpoint transfer, and extra
training data.  Each is off by default; the combined objective is
task loss + kd.weight * kd + smart.weight * smart (+ smoothing replacing the
plain choice CE), so disabling everything reproduces the baseline bitwise.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, InputError, ShapeError
from ..tensor.value import (
    Value,
    as_value,
    backward,
    bce_with_logits,
    cross_entropy,
    log_softmax,
    softmax,
    vsum,
)

__all__ = [
    "KdConfig",
    "SmoothingConfig",
    "SmartConfig",
    "TransferConfig",
    "AugmentationConfig",
    "StrategyConfig",
    "kd_loss",
    "choice_smoothing_loss",
    "smart_regularizer",
    "symmetric_kl",
]


@dataclass(frozen=True)
class KdConfig:
    enabled: bool = False
    weight: float = 1.0
    temperature: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigError("kd weight must be nonnegative")
        if self.temperature <= 0:
            raise ConfigError(f"kd temperature must be positive, got {self.temperature}")


@dataclass(frozen=True)
class SmoothingConfig:
    enabled: bool = False
    ce_weight: float = 1.0
    bce_weight: float = 1.0

    def __post_init__(self):
        if self.ce_weight < 0 or self.bce_weight < 0:
            raise ConfigError("smoothing weights must be nonnegative")


@dataclass(frozen=True)
class SmartConfig:
    enabled: bool = False
    weight: float = 1.0
    radius: float = 1e-5
    ascent_steps: int = 1
    step_size: float = 1e-3

    def __post_init__(self):
        if self.weight < 0 or self.radius < 0:
            raise ConfigError("smart weight and radius must be nonnegative")
        if self.enabled and self.ascent_steps < 1:
            raise ConfigError("smart needs ascent_steps >= 1 when enabled")


@dataclass(frozen=True)
class TransferConfig:
    source_path: str | None = None
    reinit_head: bool = True


@dataclass(frozen=True)
class AugmentationConfig:
    extra_paths: tuple = ()


@dataclass(frozen=True)
class StrategyConfig:
    kd: KdConfig = field(default_factory=KdConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    smart: SmartConfig = field(default_factory=SmartConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)

    def to_dict(self) -> dict:
        return {
            "kd": vars(self.kd).copy(),
            "smoothing": vars(self.smoothing).copy(),
            "smart": vars(self.smart).copy(),
            "transfer": vars(self.transfer).copy(),
            "augmentation": {"extra_paths": list(self.augmentation.extra_paths)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyConfig":
        return cls(
            kd=KdConfig(**d.get("kd", {})),
            smoothing=SmoothingConfig(**d.get("smoothing", {})),
            smart=SmartConfig(**d.get("smart", {})),
            transfer=TransferConfig(**d.get("transfer", {})),
            augmentation=AugmentationConfig(
                extra_paths=tuple(d.get("augmentation", {}).get("extra_paths", ()))
            ),
        )


def _np_log_softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def kd_loss(teacher_hidden, student_hidden: Value, temperature: float = 1.0) -> Value:
    """Mean per-token KL(teacher || student) over temperature softmaxes.

    Both hidden tensors are mapped to distributions over the hidden axis at
    the given temperature.  The teacher side is a constant: no gradient flows
    into it even when a live graph node is passed.
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    t_data = teacher_hidden.data if isinstance(teacher_hidden, Value) else np.asarray(teacher_hidden)
    if t_data.shape != student_hidden.shape:
        raise ShapeError(
            f"teacher shape {t_data.shape} does not match student {student_hidden.shape}"
        )
    inv_t = 1.0 / temperature
    t_logp = _np_log_softmax(t_data * inv_t)
    t_p = np.exp(t_logp)
    n_tokens = int(np.prod(t_data.shape[:-1]))
    s_logp = log_softmax(student_hidden * inv_t, axis=-1)
    # KL = sum p * (log p - log q), averaged over token positions
    kl = vsum(as_value(t_p) * (as_value(t_logp) - s_logp))
    return kl * (1.0 / n_tokens)


def choice_smoothing_loss(logits: Value, gold, weights=(1.0, 1.0)) -> Value:
    """w_ce * softmax CE over choices + w_bce * summed per-choice sigmoid BCE."""
    w_ce, w_bce = weights
    if w_ce < 0 or w_bce < 0:
        raise ConfigError("smoothing weights must be nonnegative")
    if logits.ndim != 2:
        raise ShapeError(f"expected [B,K] choice logits, got {logits.shape}")
    b, k = logits.shape
    gold = np.asarray(gold, dtype=np.int64).reshape(b)
    if gold.min() < 0 or gold.max() >= k:
        raise InputError(f"gold index out of range [0, {k})")

    total = cross_entropy(logits, gold) * w_ce
    if w_bce != 0.0:
        onehot = np.zeros((b, k))
        onehot[np.arange(b), gold] = 1.0
        total = total + vsum(bce_with_logits(logits, onehot)) * (w_bce / b)
    return total


def symmetric_kl(a: Value, b: Value) -> Value:
    """sum (p - q) * (log p - log q) over the last axis, averaged over rows.

    Equals KL(p||q) + KL(q||p); gradients flow into both arguments.
    """
    if a.shape != b.shape:
        raise ShapeError(f"logit shapes differ: {a.shape} vs {b.shape}")
    rows = int(np.prod(a.shape[:-1]))
    diff_p = softmax(a, axis=-1) - softmax(b, axis=-1)
    diff_logp = log_softmax(a, axis=-1) - log_softmax(b, axis=-1)
    return vsum(diff_p * diff_logp) * (1.0 / rows)


def smart_regularizer(model_fn, embeddings: Value, cfg: SmartConfig, rng: np.random.Generator) -> Value:
    """Adversarial smoothness penalty at the embedding output.

    A per-token perturbation delta is grown by normalized gradient ascent on
    the symmetric KL between outputs at x and x+delta, projected onto the L2
    ball of radius cfg.radius after every step; the returned penalty is the
    symmetric KL at the final delta.  No gradient flows through delta's
    construction: it enters the graph as a constant.
    """
    if cfg.radius == 0.0:
        return as_value(0.0)

    x = embeddings.data
    token_axes = tuple(range(x.ndim - 1))
    delta = rng.normal(0.0, min(cfg.radius, cfg.step_size), size=x.shape)
    delta = _project(delta, cfg.radius)

    base_const = model_fn(as_value(x.copy()))
    base_data = base_const.data.copy()

    for _ in range(max(1, cfg.ascent_steps)):
        leaf = as_value(delta.copy())
        out = model_fn(as_value(x.copy()) + leaf)
        div = symmetric_kl(as_value(base_data), out)
        backward(div)
        g = leaf.grad_or_zeros()
        norms = np.sqrt((g * g).sum(axis=-1, keepdims=True))
        delta = delta + cfg.step_size * g / (norms + 1e-12)
        delta = _project(delta, cfg.radius)

    return symmetric_kl(model_fn(embeddings), model_fn(embeddings + as_value(delta)))


def _project(delta: np.ndarray, radius: float) -> np.ndarray:
    norms = np.sqrt((delta * delta).sum(axis=-1, keepdims=True))
    scale = np.minimum(1.0, radius / np.maximum(norms, 1e-300))
    return delta * scale
