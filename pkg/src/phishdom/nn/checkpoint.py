"""Binary checkpoint format for model parameters and buffers.

Layout, in file order:

* bytes 0..3: magic ``b"PDCK"``
* bytes 4..7: unsigned 32-bit little-endian length of the header JSON
* header JSON (UTF-8): ``format_version``, ``config_hash`` and an ``entries``
  list, each entry naming one array with its ``name``, ``shape``, ``dtype``
  and ``kind`` ("param" or "buffer")
* payload: each entry's raw bytes in entry order, little-endian float64,
  C-contiguous, no padding

Loading is strict: magic, format version, config hash, entry names, order and
shapes must all match the receiving model, so a checkpoint can never be
silently applied to the wrong architecture or configuration.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .layers import Module

MAGIC = b"PDCK"
FORMAT_VERSION = 1


def _entries(model: Module) -> list[tuple[str, np.ndarray, str]]:
    rows = [(name, p.data, "param") for name, p in model.named_parameters()]
    rows += [(name, b.data, "buffer") for name, b in model.named_buffers()]
    return rows


def save_checkpoint(path: str | Path, model: Module, config_hash: str) -> None:
    rows = _entries(model)
    header = {
        "format_version": FORMAT_VERSION,
        "config_hash": config_hash,
        "entries": [
            {"name": name, "shape": list(arr.shape), "dtype": "float64", "kind": kind}
            for name, arr, kind in rows
        ],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, arr, _ in rows:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_manifest(path: str | Path) -> dict:
    """Parse and validate the header without touching the payload."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"not a checkpoint file: bad magic {magic!r}")
        (length,) = struct.unpack("<I", f.read(4))
        try:
            header = json.loads(f.read(length).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"corrupt checkpoint header: {e}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {header.get('format_version')}, expected {FORMAT_VERSION}"
        )
    return header


def load_checkpoint(path: str | Path, model: Module, config_hash: str) -> None:
    """Restore parameters and buffers in place, bit-exactly."""
    header = read_manifest(path)
    if header["config_hash"] != config_hash:
        raise CheckpointError(
            f"checkpoint was written for config {header['config_hash'][:12]}..., "
            f"current config is {config_hash[:12]}..."
        )
    rows = _entries(model)
    entries = header["entries"]
    if len(entries) != len(rows):
        raise CheckpointError(f"checkpoint has {len(entries)} arrays, model expects {len(rows)}")
    offset = 8 + len(json.dumps(header, sort_keys=True).encode("utf-8"))
    data = Path(path).read_bytes()
    for entry, (name, arr, kind) in zip(entries, rows):
        if entry["name"] != name or entry["kind"] != kind:
            raise CheckpointError(f"checkpoint entry {entry['name']!r} does not match model entry {name!r}")
        if tuple(entry["shape"]) != arr.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {tuple(entry['shape'])}, model {arr.shape}"
            )
        nbytes = arr.size * 8
        chunk = data[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"checkpoint payload truncated at entry {name!r}")
        arr[...] = np.frombuffer(chunk, dtype="<f8").reshape(arr.shape)
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"checkpoint has {len(data) - offset} trailing bytes")
