"""Versioned, byte-stable checkpoint files.

A checkpoint is a single JSON document: numpy arrays are embedded as
little-endian float64 bytes in base64, everything else as plain JSON.
Serialization is canonical (sorted keys, fixed separators), so
save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

FORMAT = "quadfault-checkpoint"
VERSION = 1


def _pack(value):
    if isinstance(value, np.ndarray):
        arr = np.ascontiguousarray(value, dtype="<f8")
        return {"__ndarray__": base64.b64encode(arr.tobytes()).decode("ascii"),
                "shape": list(arr.shape)}
    if isinstance(value, dict):
        return {k: _pack(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_pack(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def _unpack(value):
    if isinstance(value, dict):
        if "__ndarray__" in value:
            data = base64.b64decode(value["__ndarray__"])
            return np.frombuffer(data, dtype="<f8").reshape(value["shape"]).copy()
        return {k: _unpack(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_unpack(v) for v in value]
    return value


def save_checkpoint(path, payload: dict) -> None:
    """Write payload (arbitrary nesting of dicts/lists/arrays/scalars)."""
    document = {"format": FORMAT, "version": VERSION, "payload": _pack(payload)}
    text = json.dumps(document, sort_keys=True, separators=(",", ":"))
    Path(path).write_text(text)


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    document = json.loads(path.read_text())
    if document.get("format") != FORMAT:
        raise ValueError(f"{path} is not a quadfault checkpoint")
    if document.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {document.get('version')}")
    return _unpack(document["payload"])
