"""Binary checkpoint: magic, JSON network config, then named little-endian float32 tensors.

Layout::

    b"GCKPT1"
    u32 config length, config JSON (utf-8)
    u32 tensor count
    per tensor: u32 name length, name, u32 ndim, ndim x u32 dims, float32 values (<f4)

Batch-norm running statistics are stored like parameters; the integer
batch counter is not.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import IoFailure, ShapeMismatch
from .network import GraspNet, NetworkConfig

MAGIC = b"GCKPT1"


def _tensors(net):
    return [(name, t) for name, t in net.state_dict().items() if t.is_floating_point()]


def save_checkpoint(path, net):
    blob = bytearray(MAGIC)
    config = json.dumps(net.config.to_dict(), sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(config)) + config
    tensors = _tensors(net)
    blob += struct.pack("<I", len(tensors))
    for name, t in tensors:
        raw = name.encode("utf-8")
        arr = t.detach().cpu().numpy().astype("<f4")
        blob += struct.pack("<I", len(raw)) + raw
        blob += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    try:
        Path(path).write_bytes(bytes(blob))
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise IoFailure(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, dtype=torch.float32):
    """Rebuild the network stored at ``path`` (in eval mode)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if not data.startswith(MAGIC):
        raise IoFailure(f"{path}: not a checkpoint (bad magic)")
    reader = _Reader(data, path)
    reader.take(len(MAGIC))
    config = NetworkConfig.from_dict(json.loads(reader.take(reader.u32()).decode("utf-8")))
    net = GraspNet(config, dtype=dtype)
    state = net.state_dict()
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        ndim = reader.u32()
        shape = struct.unpack(f"<{ndim}I", reader.take(4 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(reader.take(4 * count), dtype="<f4").reshape(shape)
        if name not in state:
            raise IoFailure(f"{path}: unexpected tensor {name!r}")
        if tuple(state[name].shape) != tuple(shape):
            raise ShapeMismatch(f"{path}: tensor {name} has shape {shape}, "
                                f"network expects {tuple(state[name].shape)}")
        state[name] = torch.from_numpy(values.copy()).to(dtype)
    if reader.pos != len(data):
        raise IoFailure(f"{path}: trailing bytes after last tensor")
    net.load_state_dict(state)
    net.eval()
    return net
