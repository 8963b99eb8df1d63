"""Checkpoint container: one JSON header line, then a raw little-endian payload.

The header records, per tensor name, the dtype, shape, and byte offset into
the payload. Loading validates that shapes and sizes agree with the header
(and optionally with caller-expected shapes), so a truncated or mismatched
file fails loudly instead of silently misreading floats.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor

FORMAT_VERSION = 1

_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(path, tensors: dict, meta: dict | None = None) -> None:
    entries = {}
    payload = bytearray()
    for name in sorted(tensors):
        value = tensors[name]
        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        if arr.dtype == np.float64:
            dtype = "float64"
        else:
            arr = arr.astype(np.float32)
            dtype = "float32"
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        entries[name] = {
            "dtype": dtype,
            "shape": list(arr.shape),
            "offset": len(payload),
            "nbytes": len(raw),
        }
        payload.extend(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "tensors": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(header_bytes + b"\n")
        fh.write(bytes(payload))


def load_checkpoint(path, expected_shapes: dict | None = None):
    """Read tensors back; returns (name -> ndarray, meta dict)."""
    blob = Path(path).read_bytes()
    nl = blob.index(b"\n")
    header = json.loads(blob[:nl].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format version {header.get('format_version')}")
    payload = blob[nl + 1:]
    tensors: dict[str, np.ndarray] = {}
    for name, entry in header["tensors"].items():
        shape = tuple(entry["shape"])
        np_dtype = np.dtype(_DTYPES[entry["dtype"]])
        expect_bytes = int(np.prod(shape, dtype=np.int64)) * np_dtype.itemsize if shape else np_dtype.itemsize
        if entry["nbytes"] != expect_bytes:
            raise ValueError(f"checkpoint entry {name!r}: {entry['nbytes']} bytes for shape {shape}")
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise ValueError(f"checkpoint payload truncated at entry {name!r}")
        tensors[name] = np.frombuffer(raw, dtype=np_dtype).reshape(shape).copy()
    if expected_shapes:
        for name, shape in expected_shapes.items():
            if name not in tensors:
                raise ValueError(f"checkpoint lacks tensor {name!r}")
            if tensors[name].shape != tuple(shape):
                raise ValueError(
                    f"checkpoint tensor {name!r} has shape {tensors[name].shape}, expected {tuple(shape)}"
                )
    return tensors, header["meta"]
