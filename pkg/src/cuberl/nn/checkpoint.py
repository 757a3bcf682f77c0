"""Binary checkpoints: a JSON header followed by named little-endian arrays.

Layout::

    b"CUBERLCK"  u32 header_len  header (utf-8 JSON)
    repeated:    u16 name_len  name  u8 ndim  u32[ndim] shape  raw values

The header records the precision, the architecture config and its hash;
loading into a model with a different config hash is refused.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CUBERLCK"


class CheckpointError(ValueError):
    pass


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], config: dict,
                    extra: dict | None = None) -> None:
    dtypes = {np.asarray(v).dtype for v in params.values()}
    if len(dtypes) > 1:
        raise CheckpointError(f"mixed precisions in one checkpoint: {dtypes}")
    dtype = dtypes.pop() if dtypes else np.dtype(np.float32)
    header = {
        "precision": dtype.name,
        "config": config,
        "config_hash": config_hash(config),
        **(extra or {}),
    }
    head = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype=dtype.newbyteorder("<"))
            key = name.encode()
            fh.write(struct.pack("<H", len(key)))
            fh.write(key)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    try:
        (hlen,) = struct.unpack_from("<I", raw, 8)
        off = 12 + hlen
        header = json.loads(raw[12:off])
        dtype = np.dtype(header["precision"]).newbyteorder("<")
        params = {}
        while off < len(raw):
            (klen,) = struct.unpack_from("<H", raw, off)
            off += 2
            name = raw[off:off + klen].decode()
            off += klen
            (ndim,) = struct.unpack_from("<B", raw, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
            params[name] = arr.reshape(shape).astype(dtype.newbyteorder("="))
            off += count * dtype.itemsize
    except (struct.error, ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: truncated or malformed ({exc})") from None
    if header.get("config_hash") != config_hash(header.get("config", {})):
        raise CheckpointError(f"{path}: config hash mismatch")
    return header, params
