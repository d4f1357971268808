"""Checkpoint persistence: JSON manifest plus one little-endian float64 blob.

The manifest records ordered entries (name, shape, offset), a SHA-256 of
the blob, the config echo, optimizer and RNG state, so that save -> load ->
resume reproduces an uninterrupted run bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

MANIFEST = "manifest.json"
BLOB = "params.bin"


def save_checkpoint(path, arrays, meta):
    """Write ordered named float64 arrays and JSON-serializable metadata."""
    os.makedirs(path, exist_ok=True)
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)),
                        "dtype": "<f8", "offset": offset})
        chunks.append(data)
        offset += len(data)
    blob = b"".join(chunks)
    manifest = {
        "entries": entries,
        "blob_bytes": offset,
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "meta": meta,
    }
    with open(os.path.join(path, BLOB), "wb") as fh:
        fh.write(blob)
    with open(os.path.join(path, MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Load a checkpoint directory; returns (ordered arrays dict, meta)."""
    with open(os.path.join(path, MANIFEST), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(os.path.join(path, BLOB), "rb") as fh:
        blob = fh.read()
    if len(blob) != manifest["blob_bytes"]:
        raise ValueError(f"checkpoint blob truncated: expected {manifest['blob_bytes']} bytes, "
                         f"found {len(blob)}")
    digest = hashlib.sha256(blob).hexdigest()
    if digest != manifest["blob_sha256"]:
        raise ValueError("checkpoint blob hash mismatch; file corrupted")
    arrays = {}
    for entry in manifest["entries"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=start).reshape(shape)
        arrays[entry["name"]] = arr.astype(np.float64)
    return arrays, manifest["meta"]
