"""Binary model checkpoints (``CFCK``).

Layout (little-endian)::

    b"CFCK"  u16 version
    topology descriptor:
        u8 head (0 softmax, 1 sigmoid)
        u8 input rank, rank x u32 extents
        u16 layer count
        per layer: u8 kind, u8 activation, u8 param count,
                   per param: u8 dtype (1 float32, 2 float64), u8 rank, rank x u32 extents
    per layer, per param: raw little-endian scalars
    u64 metadata length, UTF-8 JSON metadata (sorted keys)

The metadata carries ``topology_hash``, the SHA-256 of the descriptor bytes,
which is re-checked on load.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .. import nn
from ..data.dataset import write_atomic
from ..errors import CheckpointError, ShapeError
from ..tensor import Tensor
from .model import HEAD_MODES, Model

MAGIC = b"CFCK"
VERSION = 1

_KINDS = {"conv2d": 1, "maxpool2d": 2, "flatten": 3, "dense": 4}
_KIND_NAMES = {v: k for k, v in _KINDS.items()}
_ACTS = {None: 0, "relu": 1, "sigmoid": 2, "softmax": 3}
_ACT_NAMES = {v: k for k, v in _ACTS.items()}
_DTYPES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_PARAM_ORDER = ("weights", "bias")


def topology_descriptor(model: Model) -> bytes:
    out = [struct.pack("<B", HEAD_MODES.index(model.head_mode))]
    out.append(struct.pack("<B", len(model.input_shape)))
    out.append(struct.pack(f"<{len(model.input_shape)}I", *model.input_shape))
    out.append(struct.pack("<H", len(model.layers)))
    for layer in model.layers:
        params = layer.params()
        out.append(struct.pack("<BBB", _KINDS[layer.kind], _ACTS[layer.activation], len(params)))
        for name in _PARAM_ORDER:
            if name in params:
                t = params[name]
                out.append(struct.pack("<BB", _DTYPES[t.dtype], t.ndim))
                out.append(struct.pack(f"<{t.ndim}I", *t.shape))
    return b"".join(out)


def topology_hash(model: Model) -> str:
    return hashlib.sha256(topology_descriptor(model)).hexdigest()


def checkpoint_bytes(model: Model, metadata: dict | None = None) -> bytes:
    descriptor = topology_descriptor(model)
    meta = dict(metadata or {})
    meta["topology_hash"] = hashlib.sha256(descriptor).hexdigest()
    parts = [MAGIC, struct.pack("<H", VERSION), descriptor]
    for layer in model.layers:
        params = layer.params()
        for name in _PARAM_ORDER:
            if name in params:
                t = params[name]
                parts.append(np.ascontiguousarray(t.array, dtype=t.dtype.newbyteorder("<")).tobytes())
    raw_meta = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<Q", len(raw_meta)) + raw_meta)
    return b"".join(parts)


def save_checkpoint(model: Model, path, metadata: dict | None = None):
    write_atomic(path, checkpoint_bytes(model, metadata))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint file is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def checkpoint_from_bytes(buf: bytes) -> tuple[Model, dict]:
    if buf[:4] != MAGIC:
        raise CheckpointError("not a CFCK checkpoint (bad magic)")
    r = _Reader(buf)
    r.take(4)
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = r.pos
    (head,) = r.unpack("<B")
    (rank,) = r.unpack("<B")
    input_shape = r.unpack(f"<{rank}I")
    (n_layers,) = r.unpack("<H")
    specs = []
    for _ in range(n_layers):
        kind, act, n_params = r.unpack("<BBB")
        if kind not in _KIND_NAMES or act not in _ACT_NAMES or head >= len(HEAD_MODES):
            raise CheckpointError("corrupt topology descriptor")
        pspecs = []
        for _ in range(n_params):
            code, prank = r.unpack("<BB")
            if code not in _DTYPE_CODES:
                raise CheckpointError(f"unknown parameter dtype code {code}")
            pspecs.append((_DTYPE_CODES[code], r.unpack(f"<{prank}I")))
        specs.append((_KIND_NAMES[kind], _ACT_NAMES[act], pspecs))
    descriptor = buf[start : r.pos]

    layers = []
    for kind, act, pspecs in specs:
        arrays = []
        for dt, shape in pspecs:
            count = int(np.prod(shape))
            raw = r.take(count * dt.itemsize)
            arrays.append(np.frombuffer(raw, dtype=dt).reshape(shape).astype(dt.newbyteorder("=")))
        try:
            if kind == "conv2d":
                layers.append(nn.Conv2DLayer(Tensor(arrays[0]), Tensor(arrays[1]), act))
            elif kind == "dense":
                layers.append(nn.DenseLayer(Tensor(arrays[0]), Tensor(arrays[1]), act))
            elif kind == "maxpool2d":
                layers.append(nn.MaxPool2DLayer())
            else:
                layers.append(nn.FlattenLayer())
        except (IndexError, ShapeError, ValueError) as exc:
            raise CheckpointError(f"corrupt {kind} layer: {exc}") from exc
    (meta_len,) = r.unpack("<Q")
    raw_meta = r.take(meta_len)
    if r.pos != len(buf):
        raise CheckpointError("trailing bytes after checkpoint metadata")
    try:
        meta = json.loads(raw_meta.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from exc
    if meta.get("topology_hash") != hashlib.sha256(descriptor).hexdigest():
        raise CheckpointError("topology hash mismatch")
    try:
        model = Model(layers, HEAD_MODES[head], input_shape)
    except ShapeError as exc:
        raise CheckpointError(f"inconsistent topology: {exc}") from exc
    return model, meta


def load_checkpoint(path) -> tuple[Model, dict]:
    """Return the model and its metadata dict."""
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    return checkpoint_from_bytes(buf)
