"""Versioned weight container: named float64 tensors plus a JSON manifest.

Layout: magic, u32 format version, u64 header length, UTF-8 JSON header
(tensor index with shapes/offsets plus the manifest), then the concatenated
little-endian float64 payload. Offsets count float64 elements.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

MAGIC = b"UIFUSE-CKPT\x00"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, tensors: Mapping[str, "np.ndarray | torch.Tensor"], manifest: dict) -> None:
    index = []
    blobs = []
    offset = 0
    for name, value in tensors.items():
        array = value.detach().cpu().numpy() if isinstance(value, torch.Tensor) else np.asarray(value)
        array = np.ascontiguousarray(array, dtype="<f8")
        index.append({"name": name, "shape": list(array.shape), "offset": offset, "count": int(array.size)})
        blobs.append(array.tobytes())
        offset += array.size
    header = json.dumps({"version": FORMAT_VERSION, "manifest": manifest, "tensors": index}).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a uifuse checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len).decode("utf-8"))
        payload = f.read()
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start = entry["offset"] * 8
        end = start + entry["count"] * 8
        array = np.frombuffer(payload[start:end], dtype="<f8").reshape(entry["shape"]).copy()
        tensors[entry["name"]] = array
    return tensors, header["manifest"]


def module_state(module: torch.nn.Module) -> dict[str, torch.Tensor]:
    return dict(module.state_dict())


def load_module_state(module: torch.nn.Module, tensors: Mapping[str, np.ndarray]) -> None:
    state = {name: torch.as_tensor(value, dtype=torch.float64) for name, value in tensors.items()}
    module.load_state_dict(state)
