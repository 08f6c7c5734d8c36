"""Checkpoint transfer and dataset augmentation merging."""

from dataclasses import dataclass

import numpy as np

from ..errors import InputError, TransferError
from ..tensor.value import ParamStore

__all__ = ["TransferReport", "transfer_init", "merge_extra_data"]

HEAD_PREFIX = "heads."


@dataclass(frozen=True)
class TransferReport:
    loaded: tuple
    reinitialized: tuple
    skipped: tuple


def transfer_init(target: ParamStore, source, reinit_head: bool = True):
    """Copy name- and shape-matched tensors from ``source`` into ``target``.

    ``source`` is a loaded parameter collection (ParamStore or name->array
    mapping).  Head tensors are withheld when ``reinit_head``, leaving the
    target's fresh initialization in place.  The report lists target tensors
    loaded or left fresh, and source tensors that matched nothing.
    """
    if isinstance(source, ParamStore):
        source_arrays = {name: v.data for name, v in source.items()}
    else:
        source_arrays = {name: np.asarray(a) for name, a in source.items()}

    loaded, reinitialized, skipped = [], [], []
    used = set()
    for name, param in target.items():
        src = source_arrays.get(name)
        if src is not None and reinit_head and name.startswith(HEAD_PREFIX):
            reinitialized.append(name)
            continue
        if src is not None and src.shape == param.data.shape:
            param.data = np.array(src, dtype=np.float64)
            loaded.append(name)
            used.add(name)
        else:
            reinitialized.append(name)
    skipped = [n for n in sorted(source_arrays) if n not in used]

    if not loaded:
        raise TransferError(
            "no tensor in the source matched the target by name and shape; wrong checkpoint?"
        )
    return target, TransferReport(tuple(loaded), tuple(reinitialized), tuple(skipped))


def merge_extra_data(primary: list, extras: list, seed: int | None = None) -> list:
    """Concatenate record lists, tagging provenance; optional seeded shuffle.

    Every record must share the primary schema (ignoring the ``source`` tag).
    Records keep an existing ``source`` field; untagged ones get ``primary``
    or ``extra{i}``.
    """
    if not primary:
        raise InputError("primary dataset is empty")
    schema = set(primary[0]) - {"source"}

    def tag_all(records, default_tag):
        out = []
        for r in records:
            if set(r) - {"source"} != schema:
                raise InputError(
                    f"record schema {sorted(set(r) - {'source'})} != primary {sorted(schema)}"
                )
            r = dict(r)
            r.setdefault("source", default_tag)
            out.append(r)
        return out

    combined = tag_all(primary, "primary")
    for i, extra in enumerate(extras):
        combined.extend(tag_all(extra, f"extra{i}"))
    if seed is not None:
        order = np.random.default_rng(seed).permutation(len(combined))
        combined = [combined[int(i)] for i in order]
    return combined
