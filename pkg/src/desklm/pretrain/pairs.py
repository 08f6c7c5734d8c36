"""Pairwise example construction for the two binary sentence objectives.

Order mode swaps two adjacent in-document segments with probability 0.5
(label 1 = swapped).  Next-segment mode replaces the true continuation with a
segment drawn from a foreign pool with probability 0.5 (label 1 = foreign).
"""

import numpy as np

from ..errors import ConfigError, InputError

__all__ = ["build_pair_example", "MODE_NSP", "MODE_SOP"]

MODE_NSP = "nsp"
MODE_SOP = "sop"


def build_pair_example(doc_segments, mode, seed, foreign_segments=None):
    """Draw one (segment A, segment B, label) example, or None to skip.

    ``doc_segments`` is an ordered list of id sequences from one document.
    Documents with fewer than two segments cannot form an adjacent pair and
    yield the skip signal None.  Next-segment mode additionally needs
    ``foreign_segments``, a non-empty pool drawn from other documents.
    """
    if mode not in (MODE_NSP, MODE_SOP):
        raise ConfigError(f"unknown pair mode {mode!r}")
    if len(doc_segments) < 2:
        return None
    rng = np.random.default_rng(seed)
    i = int(rng.integers(0, len(doc_segments) - 1))
    a = np.asarray(doc_segments[i], dtype=np.int64)
    b = np.asarray(doc_segments[i + 1], dtype=np.int64)
    if a.size == 0 or b.size == 0:
        raise InputError("pair segments must be non-empty")

    if mode == MODE_SOP:
        if rng.random() < 0.5:
            return b, a, 1
        return a, b, 0

    if not foreign_segments:
        raise ConfigError("next-segment mode needs a foreign segment pool")
    if rng.random() < 0.5:
        j = int(rng.integers(0, len(foreign_segments)))
        return a, np.asarray(foreign_segments[j], dtype=np.int64), 1
    return a, b, 0
