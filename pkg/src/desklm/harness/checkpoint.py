"""Binary checkpoint container.

Layout, all integers little-endian u32:

    magic "MZCK" | version | meta_len | meta JSON (UTF-8)
    then per tensor, in sorted name order:
    name_len | name (UTF-8) | rank | extents[rank] | float32 data (C order)

The metadata JSON carries the model geometry and free-form run metadata and
is serialized with sorted keys and fixed separators, so save -> load -> save
reproduces the file byte for byte.
"""

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointCorruptError, CheckpointFormatError, CompatibilityError
from ..model.config import ModelConfig
from ..tensor.value import ParamStore, Value

__all__ = [
    "MAGIC",
    "VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "read_checkpoint_metadata",
    "check_geometry",
]

MAGIC = b"MZCK"
VERSION = 1


def _tensor_items(params):
    if isinstance(params, ParamStore):
        return [(name, v.data) for name, v in params.items()]
    return [(name, np.asarray(arr)) for name, arr in params.items()]


def save_checkpoint(params, config: ModelConfig, path, metadata=None) -> None:
    """Write params (ParamStore or name -> array mapping) as an MZCK container."""
    header = {"config": config.to_dict(), "meta": dict(metadata or {})}
    meta_bytes = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        for name, data in sorted(_tensor_items(params)):
            payload = np.ascontiguousarray(data, dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", payload.ndim))
            fh.write(struct.pack(f"<{payload.ndim}I", *payload.shape))
            fh.write(payload.tobytes())


def load_checkpoint(path):
    """Read an MZCK container; returns (ParamStore of float64 Values, ModelConfig)."""
    params, config, _ = _read_container(path)
    return params, config


def read_checkpoint_metadata(path) -> dict:
    """The free-form run metadata stored alongside the config."""
    _, _, meta = _read_container(path)
    return meta


def _read_container(path):
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, meta_len = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported version {version}, expected {VERSION}")
    off = 12
    if off + meta_len > len(blob):
        raise CheckpointCorruptError(f"{path}: metadata truncated")
    try:
        header = json.loads(blob[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptError(f"{path}: metadata is not valid JSON: {e}") from e
    off += meta_len
    config = ModelConfig.from_dict(header["config"])

    params = ParamStore()
    seen = set()
    while off < len(blob):
        name, data, off = _read_tensor(blob, off, path)
        if name in seen:
            raise CheckpointCorruptError(f"{path}: duplicate tensor name {name!r}")
        seen.add(name)
        params.add(name, Value(data.astype(np.float64), op_tag="param"))
    return params, config, header.get("meta", {})


def _read_tensor(blob, off, path):
    def need(n, what):
        if off + n > len(blob):
            raise CheckpointCorruptError(f"{path}: {what} truncated")

    need(4, "tensor header")
    (name_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    need(name_len, "tensor name")
    name = blob[off : off + name_len].decode("utf-8")
    off += name_len
    need(4, f"tensor {name!r} rank")
    (rank,) = struct.unpack_from("<I", blob, off)
    off += 4
    need(4 * rank, f"tensor {name!r} extents")
    extents = struct.unpack_from(f"<{rank}I", blob, off)
    off += 4 * rank
    count = int(np.prod(extents, dtype=np.int64)) if rank else 1
    nbytes = 4 * count
    if off + nbytes > len(blob):
        raise CheckpointCorruptError(f"{path}: tensor {name!r} truncated")
    data = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(extents)
    return name, data, off + nbytes


def check_geometry(found: ModelConfig, expected: ModelConfig, role: str) -> None:
    """Reject a checkpoint whose geometry cannot serve the requested role."""
    fields = ("vocab_size", "hidden", "layers", "heads", "intermediate", "max_positions", "type_vocab")
    bad = [f for f in fields if getattr(found, f) != getattr(expected, f)]
    if bad:
        detail = ", ".join(f"{f}: {getattr(found, f)} != {getattr(expected, f)}" for f in bad)
        raise CompatibilityError(f"{role} checkpoint geometry mismatch: {detail}")
