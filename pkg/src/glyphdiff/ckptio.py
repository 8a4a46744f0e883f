"""Deterministic checkpoint container: JSON header plus raw tensor blobs.

Layout: magic line, little-endian uint64 header length, header JSON with
sorted keys (including a tensor index), then tensor bytes concatenated in
sorted-name order. Writing the same payload twice yields identical bytes,
so save -> load -> save round-trips exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .errors import StateError

_MAGIC = b"GLYPHCKPT1\n"


def _to_array(value) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        return np.ascontiguousarray(value.detach().cpu().numpy())
    return np.ascontiguousarray(np.asarray(value))


def save_checkpoint(path: str | Path, header: dict, tensors: dict[str, "np.ndarray | torch.Tensor"]) -> None:
    """Write header metadata and named tensors to ``path``."""
    if "tensors" in header:
        raise StateError("header key 'tensors' is reserved for the index")
    names = sorted(tensors)
    blobs: list[bytes] = []
    index: dict[str, dict] = {}
    offset = 0
    for name in names:
        arr = _to_array(tensors[name])
        data = arr.tobytes()
        index[name] = {
            "dtype": str(arr.dtype),
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(data),
        }
        blobs.append(data)
        offset += len(data)

    payload = dict(header)
    payload["tensors"] = index
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(encoded)))
        fh.write(encoded)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read back (header, tensors). Raises StateError on missing/corrupt files."""
    path = Path(path)
    if not path.exists():
        raise StateError(f"checkpoint {path} does not exist")
    raw = path.read_bytes()
    if not raw.startswith(_MAGIC):
        raise StateError(f"{path} is not a checkpoint file (bad magic)")
    cursor = len(_MAGIC)
    if len(raw) < cursor + 8:
        raise StateError(f"{path} is truncated")
    (header_len,) = struct.unpack("<Q", raw[cursor : cursor + 8])
    cursor += 8
    try:
        header = json.loads(raw[cursor : cursor + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StateError(f"{path} has a corrupt header: {exc}") from exc
    cursor += header_len

    index = header.pop("tensors", {})
    tensors: dict[str, np.ndarray] = {}
    for name, info in index.items():
        start = cursor + info["offset"]
        end = start + info["nbytes"]
        if end > len(raw):
            raise StateError(f"{path} is truncated: tensor {name} extends past end of file")
        arr = np.frombuffer(raw[start:end], dtype=np.dtype(info["dtype"]))
        tensors[name] = arr.reshape(info["shape"]).copy()
    return header, tensors


def state_dict_tensors(module: torch.nn.Module) -> dict[str, np.ndarray]:
    """Snapshot a module's state dict as numpy arrays for saving."""
    return {name: _to_array(value) for name, value in module.state_dict().items()}


def load_state_dict(module: torch.nn.Module, tensors: dict[str, np.ndarray]) -> None:
    """Restore a state dict saved with :func:`state_dict_tensors`."""
    expected = set(module.state_dict())
    got = set(tensors)
    if expected != got:
        missing = sorted(expected - got)
        extra = sorted(got - expected)
        raise StateError(f"state dict mismatch: missing {missing}, unexpected {extra}")
    module.load_state_dict({name: torch.from_numpy(arr) for name, arr in tensors.items()})
