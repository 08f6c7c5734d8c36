"""Token corruption for the masked-prediction objective.

Selection is independent per position at ``mask_rate``; a selected position is
replaced by the mask token, by a random content id, or kept unchanged, with the
classic 0.8/0.1/0.1 split exposed as policy fields.  Labels carry the original
id at selected positions and the ignore marker everywhere else.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InputError
from ..model.config import FIRST_CONTENT_ID, MASK_ID
from ..tensor.value import IGNORE_INDEX

__all__ = ["MaskingPolicy", "apply_mlm_mask"]


@dataclass(frozen=True)
class MaskingPolicy:
    mask_rate: float = 0.15
    replace_mask: float = 0.8
    replace_random: float = 0.1
    keep: float = 0.1
    seed: int = 0

    def __post_init__(self):
        # rate 0 permitted: degenerate policy leaves every label ignored
        if not 0.0 <= self.mask_rate < 1.0:
            raise ConfigError(f"mask_rate must be in [0, 1), got {self.mask_rate}")
        total = self.replace_mask + self.replace_random + self.keep
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"corruption split must sum to 1, got {total}")
        if min(self.replace_mask, self.replace_random, self.keep) < 0:
            raise ConfigError("corruption probabilities must be nonnegative")


def _content_rng(seed: int, tokens: np.ndarray) -> np.random.Generator:
    # stream keyed on (seed, token content): same sequence under the same
    # policy always draws the same mask, distinct sequences are independent
    h = hashlib.blake2b(digest_size=8)
    h.update(np.int64(seed).tobytes())
    h.update(tokens.astype(np.int64).tobytes())
    return np.random.default_rng(int.from_bytes(h.digest(), "little"))


def apply_mlm_mask(tokens, specials, policy: MaskingPolicy, vocab_size: int):
    """Corrupt one id sequence; returns (corrupted tokens, labels).

    ``specials`` is the set of ids never selected for prediction.  Random
    replacements draw uniformly from the content range
    [FIRST_CONTENT_ID, vocab_size), so a special id never appears as noise.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 1 or tokens.size == 0:
        raise InputError(f"expected a non-empty 1-d id sequence, got shape {tokens.shape}")
    if vocab_size <= FIRST_CONTENT_ID:
        raise ConfigError(f"vocab_size {vocab_size} leaves no content ids")

    rng = _content_rng(policy.seed, tokens)
    special_mask = np.isin(tokens, np.fromiter(specials, dtype=np.int64, count=len(specials)))
    selected = (~special_mask) & (rng.random(tokens.shape) < policy.mask_rate)

    corrupted = tokens.copy()
    labels = np.full(tokens.shape, IGNORE_INDEX, dtype=np.int64)
    labels[selected] = tokens[selected]

    u = rng.random(tokens.shape)
    to_mask = selected & (u < policy.replace_mask)
    to_random = selected & (u >= policy.replace_mask) & (u < policy.replace_mask + policy.replace_random)
    corrupted[to_mask] = MASK_ID
    corrupted[to_random] = rng.integers(FIRST_CONTENT_ID, vocab_size, size=int(to_random.sum()))
    return corrupted, labels
