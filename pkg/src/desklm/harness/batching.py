"""Batch assembly for the training loops.

Pre-training rows are [CLS] segment_a [SEP] segment_b [SEP] built from one
corpus window: the window's content is split in half, the pair objective
may swap or replace the second half, and masking corruption plus the tag
label grids are derived from the original (pre-corruption) ids.
"""

import numpy as np

from ..errors import ConfigError, InputError
from ..model.config import CLS_ID, SEP_ID, SPECIAL_IDS, TokenizedBatch
from ..pretrain import MODE_NSP, MODE_SOP, apply_mlm_mask, build_pair_example
from ..tensor import IGNORE_INDEX
from .synth import ne_tag_of, pos_tag_of

__all__ = ["pair_mode_for", "build_pretrain_batch", "pack_cls_batch", "pack_span_batch", "pack_choice_batch"]


def pair_mode_for(weights):
    """Which pair objective the loop trains; at most one may carry weight."""
    if weights.nsp > 0 and weights.sop > 0:
        raise ConfigError("the loop trains one pair objective per run; "
                          "set either nsp or sop weight to zero")
    if weights.nsp > 0:
        return MODE_NSP
    if weights.sop > 0:
        return MODE_SOP
    return None


def _halves(tokens):
    half = len(tokens) // 2
    return [tokens[:half], tokens[half:]]


def build_pretrain_batch(windows, seq_len, config, policy, pair_mode, pair_seed_base, ne_ids):
    """Pack one window per row; returns a fully labeled TokenizedBatch."""
    if seq_len < 8:
        raise ConfigError(f"seq_len {seq_len} too short to pack a pair row")
    n = len(windows)
    rows = np.full((n, seq_len), 0, dtype=np.int64)
    segs = np.zeros((n, seq_len), dtype=np.int64)
    attn = np.zeros((n, seq_len), dtype=np.int64)
    mlm = np.full((n, seq_len), IGNORE_INDEX, dtype=np.int64)
    pos = np.full((n, seq_len), IGNORE_INDEX, dtype=np.int64)
    ne = np.full((n, seq_len), IGNORE_INDEX, dtype=np.int64)
    pair_labels = np.zeros(n, dtype=np.int64)

    for j, w in enumerate(windows):
        content = np.asarray(w.tokens[: seq_len - 3], dtype=np.int64)
        segments = _halves(content)
        foreign = None
        if pair_mode == MODE_NSP:
            if n < 2:
                raise ConfigError("the next-sentence objective needs batches of at least 2")
            foreign = _halves(np.asarray(windows[(j + 1) % n].tokens[: seq_len - 3], dtype=np.int64))
        if pair_mode is None:
            a, b, label = segments[0], segments[1], 0
        else:
            a, b, label = build_pair_example(segments, pair_mode, seed=pair_seed_base + j,
                                             foreign_segments=foreign)
        b = np.asarray(b)[: seq_len - 3 - len(a)]
        row = np.concatenate(([CLS_ID], a, [SEP_ID], b, [SEP_ID])).astype(np.int64)
        t = len(row)
        corrupted, labels = apply_mlm_mask(row, SPECIAL_IDS, policy, config.vocab_size)

        rows[j, :t] = corrupted
        segs[j, :t] = np.concatenate((np.zeros(len(a) + 2, np.int64), np.ones(len(b) + 1, np.int64)))
        attn[j, :t] = 1
        mlm[j, :t] = labels
        # tag labels come from the original ids at content positions
        is_content = ~np.isin(row, SPECIAL_IDS)
        pos[j, :t] = np.where(is_content, pos_tag_of(row, config.pos_tagset), IGNORE_INDEX)
        ne[j, :t] = np.where(is_content, ne_tag_of(row, ne_ids), IGNORE_INDEX)
        pair_labels[j] = label

    return TokenizedBatch(token_ids=rows, segment_ids=segs, attn_mask=attn,
                          mlm_labels=mlm, pair_label=pair_labels,
                          pos_labels=pos, ne_labels=ne)


def pack_cls_batch(records, max_len):
    """[CLS] tokens [SEP] rows padded together; returns (batch, labels)."""
    rows = np.full((len(records), max_len), 0, dtype=np.int64)
    attn = np.zeros((len(records), max_len), dtype=np.int64)
    width = 0
    labels = np.zeros(len(records), dtype=np.int64)
    for i, r in enumerate(records):
        toks = np.asarray(r["tokens"], dtype=np.int64)[: max_len - 2]
        if toks.size == 0:
            raise InputError("classification record has no tokens")
        row = np.concatenate(([CLS_ID], toks, [SEP_ID]))
        rows[i, : len(row)] = row
        attn[i, : len(row)] = 1
        width = max(width, len(row))
        labels[i] = int(r["label"])
    rows, attn = rows[:, :width], attn[:, :width]
    batch = TokenizedBatch(token_ids=rows, segment_ids=np.zeros_like(rows), attn_mask=attn)
    return batch, labels


def _repad(singles, extras=None):
    """Stack (1,T_i) batches into one right-padded batch."""
    width = max(s.token_ids.shape[1] for s in singles)
    n = len(singles)
    rows = np.full((n, width), 0, dtype=np.int64)
    segs = np.zeros((n, width), dtype=np.int64)
    attn = np.zeros((n, width), dtype=np.int64)
    for i, s in enumerate(singles):
        t = s.token_ids.shape[1]
        rows[i, :t] = s.token_ids[0]
        segs[i, :t] = s.segment_ids[0]
        attn[i, :t] = s.attn_mask[0]
    return TokenizedBatch(token_ids=rows, segment_ids=segs, attn_mask=attn)


def pack_span_batch(records, max_len):
    """Pack span records; returns (batch, gold [B,2] in row coordinates).

    The gold span must survive passage truncation at max_len.
    """
    from ..finetune import pack_span_input

    singles, gold = [], []
    for r in records:
        q, p = r["question"], r["passage"]
        single = pack_span_input(q, p, max_len)
        offset = len(q) + 2
        packed_passage = single.token_ids.shape[1] - offset - 1
        if not 0 <= r["start"] <= r["end"] < packed_passage:
            raise InputError(
                f"gold span [{r['start']}, {r['end']}] outside the packed passage of {packed_passage}"
            )
        singles.append(single)
        gold.append((offset + r["start"], offset + r["end"]))
    return _repad(singles), np.asarray(gold, dtype=np.int64)


def pack_choice_batch(records, num_choices, max_len):
    """Flatten each record's K choice rows; returns (batch of B*K rows, labels [B])."""
    from ..finetune import pack_multichoice

    singles, labels = [], []
    for r in records:
        if len(r["choices"]) != num_choices:
            raise InputError(f"expected {num_choices} choices, got {len(r['choices'])}")
        packed = pack_multichoice(r["question"], r["choices"], r["passage"], max_len)
        for k in range(num_choices):
            singles.append(TokenizedBatch(
                token_ids=packed.token_ids[k : k + 1],
                segment_ids=packed.segment_ids[k : k + 1],
                attn_mask=packed.attn_mask[k : k + 1],
            ))
        labels.append(int(r["label"]))
    return _repad(singles), np.asarray(labels, dtype=np.int64)
