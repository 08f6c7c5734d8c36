"""Globally balanced window sampling over a finalized corpus.

Each article is re-chunked into non-overlapping windows of the current
stage's sequence length (the final partial chunk is dropped), and one epoch
emits every window exactly once in a permutation determined by
(seed, epoch, stage_id).  The permutation is computed over the fully
materialized window list, so the order is independent of how many workers
prepared the articles upstream.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InputError


@dataclass(frozen=True)
class Window:
    """One training window: source article id, token offset, and the tokens."""

    article_id: int
    start: int
    tokens: np.ndarray

    def key(self):
        # hashable identity for multiset comparisons; tokens are determined
        # by (article_id, start, len) for a fixed corpus
        return (self.article_id, self.start, len(self.tokens))


def default_tokenize(text):
    """Default tokenizer for synthetic corpora: whitespace-separated integer ids."""
    try:
        return np.array([int(tok) for tok in text.split()], dtype=np.int64)
    except ValueError as e:
        raise InputError(f"default tokenizer expects integer tokens: {e}") from e


def chunk_article(article, seq_len, tokenize=default_tokenize):
    """Non-overlapping full windows of seq_len tokens; the partial tail is dropped."""
    tokens = tokenize(article.text)
    n_full = len(tokens) // seq_len
    return [
        Window(article_id=article.id, start=k * seq_len, tokens=tokens[k * seq_len : (k + 1) * seq_len])
        for k in range(n_full)
    ]


def global_sample(corpus, schedule, epoch, seed, stage_id=1, tokenize=default_tokenize):
    """One epoch's windows in a seed-determined global order.

    corpus: sequence of Article (finalized, post-dedup); must be non-empty.
    schedule: TrainingSchedule supplying stage1_len / stage2_len.
    stage_id selects the window length (1 or 2).  Same (seed, epoch,
    stage_id) always yields the same order.
    """
    corpus = list(corpus)
    if not corpus:
        raise InputError("global_sample requires a non-empty corpus")
    if stage_id == 1:
        seq_len = schedule.stage1_len
    elif stage_id == 2:
        seq_len = schedule.stage2_len
    else:
        raise ConfigError(f"stage_id must be 1 or 2, got {stage_id}")
    if epoch < 0 or seed < 0:
        raise ConfigError("epoch and seed must be non-negative")

    windows = []
    for article in corpus:
        windows.extend(chunk_article(article, seq_len, tokenize=tokenize))
    if not windows:
        return []
    rng = np.random.default_rng([int(seed), int(epoch), int(stage_id)])
    order = rng.permutation(len(windows))
    return [windows[i] for i in order]
