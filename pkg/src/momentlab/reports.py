"""Deterministic report and state serialization.

JSON reports use sorted keys and plain float repr so that identical inputs
produce byte-identical files.  Grid fields serialize to a small binary
layout: a 16-byte header of four little-endian uint32 words
(backend tag: 0 = torus, 1 = cp1; complex dimension n; grid size N or M;
field count), followed by the fields as row-major float64.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import UsageError
from . import __version__

_BACKEND_TAGS = {"torus": 0, "cp1": 1}
_TAG_BACKENDS = {v: k for k, v in _BACKEND_TAGS.items()}


def config_digest(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def write_json_report(path, payload: dict, config: dict | None = None) -> dict:
    """Write a deterministic JSON report embedding digest and version."""
    doc = {"tool_version": __version__, "report": _jsonable(payload)}
    if config is not None:
        doc["config_digest"] = config_digest(_jsonable(config))
        doc["config"] = _jsonable(config)
    text = json.dumps(doc, sort_keys=True, indent=2)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")
    return doc


def write_csv_density(path, columns: dict) -> None:
    """Columns of equal length to CSV with a header row."""
    names = list(columns.keys())
    arrays = [np.asarray(columns[k]).ravel() for k in names]
    length = len(arrays[0])
    if any(len(a) != length for a in arrays):
        raise UsageError("CSV columns must have equal length")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in zip(*arrays):
            writer.writerow([repr(float(v)) for v in row])


def write_binary_fields(path, backend: str, n: int, grid: int, fields) -> None:
    fields = [np.ascontiguousarray(f, dtype=np.float64) for f in fields]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4I", _BACKEND_TAGS[backend], n, grid, len(fields)))
        for f in fields:
            fh.write(f.tobytes())


def read_binary_fields(path):
    """Returns (backend, n, grid, list-of-flat-arrays)."""
    raw = Path(path).read_bytes()
    tag, n, grid, count = struct.unpack("<4I", raw[:16])
    backend = _TAG_BACKENDS.get(tag)
    if backend is None:
        raise UsageError(f"unknown backend tag {tag}")
    body = np.frombuffer(raw[16:], dtype="<f8")
    if count > 0 and body.size % count != 0:
        raise UsageError("binary body size does not divide into fields")
    per = body.size // count if count else 0
    return backend, n, grid, [body[i * per:(i + 1) * per].copy() for i in range(count)]
