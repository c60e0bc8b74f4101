"""Self-describing binary checkpoint: a JSON header followed by raw float64 data.

Layout: ``MAGIC`` (8 bytes), header length (8-byte little-endian unsigned),
UTF-8 JSON header with sorted keys, then the concatenated little-endian
float64 arrays in header order.  Writing the same arrays and metadata always
produces the same bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"SORDCKP\x00"
FORMAT = "sceneorder-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(arrays: Mapping[str, np.ndarray], meta: Mapping | None = None) -> bytes:
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {"format": FORMAT, "version": VERSION, "params": entries, "meta": dict(meta or {})}
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<Q", len(hb)) + hb + b"".join(blobs)


def loads(buf: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if buf[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (n,) = struct.unpack("<Q", buf[8:16])
    try:
        header = json.loads(buf[16:16 + n].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    if header.get("format") != FORMAT:
        raise CheckpointError(f"unknown checkpoint format {header.get('format')!r}")
    if header.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
    body = memoryview(buf)[16 + n:]
    arrays = {}
    for e in header["params"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        start = e["offset"]
        if start + 8 * count > len(body):
            raise CheckpointError(f"checkpoint truncated at parameter {e['name']!r}")
        arrays[e["name"]] = np.frombuffer(body[start:start + 8 * count], dtype="<f8").reshape(tuple(e["shape"])).astype(np.float64)
    return arrays, header["meta"]


def save(path, arrays, meta=None):
    Path(path).write_bytes(dumps(arrays, meta))


def load(path):
    return loads(Path(path).read_bytes())
