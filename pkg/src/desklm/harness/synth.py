"""Synthetic corpus and task generators.

The corpus is a noisy affine walk over the content ids: token t+1 equals
f(t) = FIRST_CONTENT_ID + (mult * (t - FIRST_CONTENT_ID) + offset) mod n
with a small replacement noise, so a masked token is recoverable from either
neighbor and segment order is detectable at the boundary.  Tag labels are
pure functions of the token id (POS: id mod tagset; NE: membership in a
seeded id subset), verifiable by recomputation over every token.

Task generators plant an unambiguous marker signal: classification examples
draw every token from the label's residue class, span answers are a run of
the question token inside the passage, and the correct choice is the one
containing the marker.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..corpus import make_article, write_corpus
from ..errors import ConfigError, InputError
from ..model.config import FIRST_CONTENT_ID

__all__ = [
    "SynthPattern",
    "make_synthetic_corpus",
    "successor",
    "pos_tag_of",
    "ne_tag_of",
    "make_ne_set",
    "make_synthetic_classification",
    "make_synthetic_span",
    "make_synthetic_choice",
    "write_task_data",
    "load_task_data",
]


@dataclass(frozen=True)
class SynthPattern:
    mult: int
    offset: int
    n_content: int


def _content_count(vocab: int) -> int:
    if vocab < 16:
        raise ConfigError(f"synthetic vocab must be >= 16, got {vocab}")
    return vocab - FIRST_CONTENT_ID


def _pattern(seed: int, vocab: int) -> SynthPattern:
    n = _content_count(vocab)
    rng = np.random.default_rng([seed, 2])
    coprime = [a for a in range(2, n) if math.gcd(a, n) == 1]
    mult = int(coprime[int(rng.integers(len(coprime)))])
    offset = int(rng.integers(1, n))
    return SynthPattern(mult=mult, offset=offset, n_content=n)


def successor(ids, pattern: SynthPattern):
    """The deterministic next-token map; a bijection on the content range."""
    ids = np.asarray(ids, dtype=np.int64)
    return FIRST_CONTENT_ID + ((ids - FIRST_CONTENT_ID) * pattern.mult + pattern.offset) % pattern.n_content


def pos_tag_of(ids, pos_tagset: int):
    return np.asarray(ids, dtype=np.int64) % pos_tagset


def make_ne_set(seed: int, vocab: int) -> np.ndarray:
    """Seeded quarter of the content ids; the positive class for NE tagging."""
    n = _content_count(vocab)
    rng = np.random.default_rng([seed, 7])
    picked = rng.choice(np.arange(FIRST_CONTENT_ID, vocab), size=max(1, n // 4), replace=False)
    return np.sort(picked)


def ne_tag_of(ids, ne_ids) -> np.ndarray:
    return np.isin(np.asarray(ids, dtype=np.int64), ne_ids).astype(np.int64)


def make_synthetic_corpus(out_dir, seed: int, n_articles: int = 48, vocab: int = 64,
                          min_tokens: int = 96, max_tokens: int = 640, noise: float = 0.01) -> dict:
    """Write corpus.jsonl + synth_meta.json under out_dir; returns their paths.

    Same seed and sizes always produce byte-identical files.
    """
    if not 0.0 <= noise < 0.5:
        raise ConfigError(f"noise must be in [0, 0.5), got {noise}")
    if n_articles < 1 or min_tokens < 4 or max_tokens < min_tokens:
        raise ConfigError("need n_articles >= 1 and max_tokens >= min_tokens >= 4")
    pattern = _pattern(seed, vocab)
    ne_ids = make_ne_set(seed, vocab)
    rng = np.random.default_rng([seed, 1])

    articles = []
    for i in range(n_articles):
        length = int(rng.integers(min_tokens, max_tokens + 1))
        seq = np.empty(length, dtype=np.int64)
        seq[0] = int(rng.integers(FIRST_CONTENT_ID, vocab))
        noisy = rng.random(length) < noise
        noise_draw = rng.integers(FIRST_CONTENT_ID, vocab, size=length)
        for t in range(1, length):
            # the walk continues from the emitted token, so every transition
            # except the noisy ones satisfies the successor map
            seq[t] = noise_draw[t] if noisy[t] else successor(seq[t - 1], pattern)
        articles.append(make_article(" ".join(str(t) for t in seq), source="synth"))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_path = out_dir / "corpus.jsonl"
    meta_path = out_dir / "synth_meta.json"
    write_corpus(corpus_path, articles)
    meta = {
        "seed": seed,
        "vocab": vocab,
        "n_articles": n_articles,
        "min_tokens": min_tokens,
        "max_tokens": max_tokens,
        "noise": noise,
        "pattern": {"mult": pattern.mult, "offset": pattern.offset, "n_content": pattern.n_content},
        "ne_ids": [int(i) for i in ne_ids],
    }
    meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return {"corpus": str(corpus_path), "meta": str(meta_path)}


def _content_ids(vocab: int) -> np.ndarray:
    _content_count(vocab)
    return np.arange(FIRST_CONTENT_ID, vocab, dtype=np.int64)


def make_synthetic_classification(seed: int, n_examples: int, vocab: int,
                                  n_classes: int = 2, length: int = 12) -> list:
    """Every token of an example is drawn from the label's residue class."""
    if n_classes < 2:
        raise ConfigError(f"need n_classes >= 2, got {n_classes}")
    ids = _content_ids(vocab)
    pools = [ids[ids % n_classes == c] for c in range(n_classes)]
    if any(p.size == 0 for p in pools):
        raise ConfigError("vocab too small to populate every class pool")
    rng = np.random.default_rng([seed, 3])
    records = []
    for _ in range(n_examples):
        label = int(rng.integers(n_classes))
        tokens = rng.choice(pools[label], size=length, replace=True)
        records.append({"tokens": [int(t) for t in tokens], "label": label})
    return records


def make_synthetic_span(seed: int, n_examples: int, vocab: int,
                        passage_len: int = 20, max_span: int = 3) -> list:
    """The answer is the run of the question token planted in the passage."""
    ids = _content_ids(vocab)
    rng = np.random.default_rng([seed, 4])
    records = []
    for _ in range(n_examples):
        marker = int(rng.choice(ids))
        others = ids[ids != marker]
        passage = rng.choice(others, size=passage_len, replace=True)
        span_len = int(rng.integers(1, max_span + 1))
        start = int(rng.integers(0, passage_len - span_len + 1))
        passage[start : start + span_len] = marker
        records.append({
            "question": [marker],
            "passage": [int(t) for t in passage],
            "start": start,
            "end": start + span_len - 1,
        })
    return records


def make_synthetic_choice(seed: int, n_examples: int, vocab: int, num_choices: int = 3,
                          choice_len: int = 4, passage_len: int = 12) -> list:
    """Exactly one choice contains the marker token named by the question."""
    ids = _content_ids(vocab)
    rng = np.random.default_rng([seed, 5])
    records = []
    for _ in range(n_examples):
        marker = int(rng.choice(ids))
        others = ids[ids != marker]
        label = int(rng.integers(num_choices))
        choices = []
        for k in range(num_choices):
            row = rng.choice(others, size=choice_len, replace=True)
            if k == label:
                row[int(rng.integers(choice_len))] = marker
            choices.append([int(t) for t in row])
        passage = rng.choice(others, size=passage_len, replace=True)
        records.append({
            "question": [marker],
            "choices": choices,
            "passage": [int(t) for t in passage],
            "label": label,
        })
    return records


_REQUIRED_FIELDS = {
    "cls": ("tokens", "label"),
    "span": ("question", "passage", "start", "end"),
    "choice": ("question", "choices", "passage", "label"),
}


def write_task_data(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def load_task_data(path, kind: str) -> list:
    if kind not in _REQUIRED_FIELDS:
        raise ConfigError(f"unknown task data kind {kind!r}")
    required = _REQUIRED_FIELDS[kind]
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise InputError(f"{path}: line {lineno}: invalid JSON: {e}") from e
            missing = [f for f in required if f not in record]
            if missing:
                raise InputError(f"{path}: line {lineno}: missing fields {missing}")
            records.append(record)
    if not records:
        raise InputError(f"{path}: no records")
    return records
