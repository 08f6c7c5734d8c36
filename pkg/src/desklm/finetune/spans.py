"""Span extraction: start/end logits and the pair-argmax decoder."""

import numpy as np

from ..errors import InputError
from ..tensor.value import ParamStore, Value, matmul, reshape

__all__ = ["span_logits", "mask_non_passage", "decode_span", "SPAN_MASK_BIAS"]

SPAN_MASK_BIAS = -1e9


def span_logits(hidden: Value, head_params: ParamStore):
    """Two independent linear maps H -> 1; returns raw (start, end) [B,T]."""
    b, t, h = hidden.shape
    flat = reshape(hidden, (b * t, h))
    out = []
    for side in ("start", "end"):
        w = head_params[f"heads.span.{side}.weight"]
        bias = head_params[f"heads.span.{side}.bias"]
        out.append(reshape(matmul(flat, w) + bias, (b, t)))
    return out[0], out[1]


def mask_non_passage(logits: np.ndarray, passage: np.ndarray) -> np.ndarray:
    """Push non-passage positions to the mask bias so they never decode."""
    out = np.asarray(logits, dtype=np.float64).copy()
    out[~np.asarray(passage, dtype=bool)] = SPAN_MASK_BIAS
    return out


def decode_span(start: np.ndarray, end: np.ndarray, max_answer_len: int = 30):
    """Best (i, j) with i <= j <= i+max_answer_len-1 by start[i]+end[j].

    Ties break toward the smallest i, then the smallest j.  Inputs are 1-d
    score vectors with non-candidate positions already masked.
    """
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    if start.shape != end.shape or start.ndim != 1:
        raise InputError(f"expected matching 1-d score vectors, got {start.shape} and {end.shape}")
    if not (np.isfinite(start).all() and np.isfinite(end).all()):
        raise InputError("span scores must be finite")
    if max_answer_len < 1:
        raise InputError(f"max_answer_len must be >= 1, got {max_answer_len}")

    t = start.shape[0]
    best = None
    best_score = -np.inf
    for i in range(t):
        if start[i] <= SPAN_MASK_BIAS:
            continue
        for j in range(i, min(i + max_answer_len, t)):
            if end[j] <= SPAN_MASK_BIAS:
                continue
            score = start[i] + end[j]
            if score > best_score:
                best_score = score
                best = (i, j)
    if best is None:
        raise InputError("no decodable span: every candidate position is masked")
    return best
