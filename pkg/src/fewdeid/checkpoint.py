"""Binary parameter checkpoints: versioned header, JSON manifest, raw
little-endian tensor payloads. Reload is bit-exact."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"FEWDEIDCKPT1\n"


class CheckpointError(ValueError):
    pass


def _wire_dtype(arr: np.ndarray) -> str:
    return f"<{arr.dtype.kind}{arr.dtype.itemsize}"


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    entries = []
    payloads = []
    for name, arr in arrays.items():
        wire = np.ascontiguousarray(arr).astype(_wire_dtype(arr), copy=False)
        buf = wire.tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": _wire_dtype(arr), "nbytes": len(buf)}
        )
        payloads.append(buf)
    header = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(header.encode("utf-8"))
        f.write(b"\n")
        for buf in payloads:
            f.write(buf)


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"not a checkpoint file (bad magic): {path}")
        header_bytes = bytearray()
        while True:
            ch = f.read(1)
            if not ch:
                raise CheckpointError("truncated checkpoint header")
            if ch == b"\n":
                break
            header_bytes.extend(ch)
        header = json.loads(header_bytes.decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            buf = f.read(entry["nbytes"])
            if len(buf) != entry["nbytes"]:
                raise CheckpointError(f"truncated payload for tensor {entry['name']!r}")
            arr = np.frombuffer(buf, dtype=entry["dtype"]).reshape(entry["shape"]).copy()
            arrays[entry["name"]] = arr
    return arrays, header.get("meta", {})
