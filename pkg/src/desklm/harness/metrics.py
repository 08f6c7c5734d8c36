"""Metric computations and the line-per-step JSON metrics log.

Span scoring follows the standard token-overlap definitions: EM is 1 when
the predicted (start, end) pair equals the gold pair exactly; F1 treats the
two spans as position sets, with precision = overlap / predicted length,
recall = overlap / gold length, F1 = 2PR/(P+R) (0 when the overlap is
empty).  Reported span metrics are means over examples, plus the EM/F1
average used as the single headline number.
"""

import json

__all__ = ["span_em_f1", "aggregate_span_scores", "MetricsWriter"]


def span_em_f1(pred, gold):
    """(EM, F1) for one example; spans are inclusive (start, end) pairs."""
    ps, pe = int(pred[0]), int(pred[1])
    gs, ge = int(gold[0]), int(gold[1])
    em = 1.0 if (ps, pe) == (gs, ge) else 0.0
    overlap = min(pe, ge) - max(ps, gs) + 1
    if overlap <= 0:
        return em, 0.0
    precision = overlap / (pe - ps + 1)
    recall = overlap / (ge - gs + 1)
    return em, 2.0 * precision * recall / (precision + recall)


def aggregate_span_scores(pairs):
    """Mean EM, F1, and their average over (pred, gold) pairs."""
    ems, f1s = [], []
    for pred, gold in pairs:
        em, f1 = span_em_f1(pred, gold)
        ems.append(em)
        f1s.append(f1)
    n = max(len(ems), 1)
    em = sum(ems) / n
    f1 = sum(f1s) / n
    return {"em": em, "f1": f1, "avg_em_f1": (em + f1) / 2.0}


class MetricsWriter:
    """Writes one sorted-key JSON object per line; deterministic bytes."""

    def __init__(self, path):
        self.path = path
        self._fh = None
        self.count = 0

    def __enter__(self):
        self._fh = open(self.path, "w", encoding="utf-8")
        return self

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record, sort_keys=True) + "\n")
        self.count += 1

    def __exit__(self, *exc):
        self._fh.close()
        self._fh = None
        return False
