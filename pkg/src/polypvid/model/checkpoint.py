"""Checkpoint container.

Byte layout (all integers little-endian)::

    offset 0   8 bytes   magic b"PVIDCKPT"
    offset 8   uint32    format version (currently 1)
    offset 12  uint64    header length N
    offset 20  N bytes   UTF-8 JSON header
    offset 20+N          data section

The header holds ``config`` (model/run snapshot), ``epoch``, ``val_loss``,
``extra`` and ``tensors``: a list of ``{"name", "shape", "dtype", "offset",
"nbytes"}`` records. ``dtype`` is ``"<f4"`` for floating tensors and ``"<i8"``
for integer ones (batch-norm counters). Offsets are relative to the start of the
data section and aligned to 8 bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from polypvid.errors import DataError

MAGIC = b"PVIDCKPT"
FORMAT_VERSION = 1
_ALIGN = 8


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: dict
    epoch: int = 0
    val_loss: float | None = None
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: torch.nn.Module, config: dict, epoch: int = 0,
                   val_loss: float | None = None, extra: dict | None = None) -> "Checkpoint":
        tensors = {}
        for name, t in model.state_dict().items():
            arr = t.detach().cpu().numpy()
            arr = arr.astype("<i8") if np.issubdtype(arr.dtype, np.integer) else arr.astype("<f4")
            tensors[name] = arr
        return cls(tensors, config, epoch, val_loss, dict(extra or {}))

    def state_dict(self) -> dict[str, torch.Tensor]:
        return {k: torch.from_numpy(np.array(v)) for k, v in self.tensors.items()}


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    path = Path(path)
    records, blobs, offset = [], [], 0
    for name, arr in ckpt.tensors.items():
        arr = np.asarray(arr)
        dtype = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f4"
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        records.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                        "offset": offset, "nbytes": len(raw)})
        pad = (-len(raw)) % _ALIGN
        blobs.append(raw + b"\0" * pad)
        offset += len(raw) + pad
    header = json.dumps({
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "val_loss": ckpt.val_loss,
        "extra": ckpt.extra,
        "tensors": records,
    }, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        f.write(header)
        for b in blobs:
            f.write(b)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[20:20 + hlen].decode("utf-8"))
    base = 20 + hlen
    tensors = {}
    for rec in header["tensors"]:
        start = base + rec["offset"]
        arr = np.frombuffer(data, dtype=rec["dtype"], count=int(np.prod(rec["shape"], dtype=np.int64)),
                            offset=start)
        tensors[rec["name"]] = arr.reshape(rec["shape"]).copy()
    return Checkpoint(tensors, header["config"], header["epoch"], header["val_loss"],
                      header.get("extra", {}))
