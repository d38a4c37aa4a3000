"""Versioned checkpoint container.

Layout: 8-byte magic, little-endian uint32 version, uint64 header length, a
UTF-8 JSON header (sorted keys) describing metadata and an array table, then
the raw C-ordered array bytes in table order. No timestamps, so identical
content always yields identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CompatibilityError, DataError

MAGIC = b"TINPCKPT"
VERSION = 1


def dumps(arrays: dict[str, np.ndarray], meta: dict) -> bytes:
    table = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        raw = arr.tobytes()
        table.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "arrays": table}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[: len(MAGIC)] != MAGIC:
        raise CompatibilityError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", blob, len(MAGIC))
    if version != VERSION:
        raise CompatibilityError(f"unsupported checkpoint version {version}")
    start = len(MAGIC) + struct.calcsize("<IQ")
    header = json.loads(blob[start : start + hlen].decode("utf-8"))
    base = start + hlen
    arrays = {}
    for entry in header["arrays"]:
        lo = base + entry["offset"]
        buf = blob[lo : lo + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(buf, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"]).copy()
    return arrays, header["meta"]


def save(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> str:
    """Write the container and return its sha256 hex digest."""
    blob = dumps(arrays, meta)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_bytes(blob)
    except OSError as exc:
        raise DataError(f"{path}: cannot write checkpoint: {exc}") from exc
    return hashlib.sha256(blob).hexdigest()


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read checkpoint: {exc}") from exc
    return loads(blob)


def file_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def module_arrays(module, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}.{k}": v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_module_arrays(module, arrays: dict[str, np.ndarray], prefix: str) -> None:
    import torch

    state = {k[len(prefix) + 1 :]: torch.from_numpy(v.copy()) for k, v in arrays.items() if k.startswith(prefix + ".")}
    missing = set(module.state_dict()) - set(state)
    if missing:
        raise CompatibilityError(f"checkpoint lacks {prefix} parameters: {sorted(missing)[:5]}")
    module.load_state_dict(state)
