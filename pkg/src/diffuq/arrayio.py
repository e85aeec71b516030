"""Bit-exact array container: one JSON header line + raw little-endian float64.

Used for checkpoints, posteriors and trajectory records so that files can be
re-read (and re-written) byte for byte across platforms and implementations.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["save_arrays", "load_arrays"]

_MAGIC = "diffuq-arrays-v1"


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float64 arrays with a JSON header naming shapes."""
    header = {
        "format": _MAGIC,
        "arrays": [{"name": k, "shape": list(np.asarray(v).shape)} for k, v in arrays.items()],
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read arrays written by save_arrays; returns (arrays, meta)."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        if header.get("format") != _MAGIC:
            raise ValueError(f"{path}: not a {_MAGIC} file")
        arrays: dict[str, np.ndarray] = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"{path}: truncated array {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return arrays, header.get("meta", {})
