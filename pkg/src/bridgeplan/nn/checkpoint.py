"""Binary checkpoint format.

Layout (little endian)::

    b"XFMP" | u16 version | u32 n | n bytes UTF-8 JSON metadata
    | u32 tensor count | per tensor: u16 name length, name, u8 rank,
      rank x u32 dims, f32 data

Tensors are written in sorted name order so equal models give equal bytes.
"""

import json
import struct

import numpy as np

from ..core import Rng
from ..errors import CheckpointFormatError
from .model import ArchSpec, FieldModel

MAGIC = b"XFMP"
VERSION = 1


def to_bytes(model: FieldModel) -> bytes:
    meta = {"arch": model.arch.to_dict(), "d": model.d, "meta": model.meta}
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = [MAGIC, struct.pack("<HI", VERSION, len(blob)), blob, struct.pack("<I", len(model.params))]
    for name in sorted(model.params):
        arr = np.asarray(model.params[name], dtype="<f4")
        key = name.encode("utf-8")
        out.append(struct.pack("<H", len(key)) + key + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf):
        self.buf, self.pos = buf, 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError("checkpoint is truncated")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(buf: bytes) -> FieldModel:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("bad magic header; not a model checkpoint")
    version, n = r.unpack("<HI")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version} (expected {VERSION})")
    try:
        meta = json.loads(r.take(n).decode("utf-8"))
        arch = ArchSpec.from_dict(meta["arch"])
        d = int(meta["d"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"unreadable checkpoint metadata: {exc}") from exc
    (count,) = r.unpack("<I")
    params = {}
    for _ in range(count):
        (klen,) = r.unpack("<H")
        name = r.take(klen).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims)
        params[name] = data.astype(np.float64)
    if r.pos != len(buf):
        raise CheckpointFormatError("trailing bytes after the last tensor")
    model = FieldModel(arch, d, meta=meta.get("meta", {}))
    expected = FieldModel(arch, d)
    expected_names = _param_shapes(expected)
    got = {k: v.shape for k, v in params.items()}
    if got != expected_names:
        missing = sorted(set(expected_names) - set(got))
        raise CheckpointFormatError(f"tensor set does not match the architecture (missing: {missing[:3]})")
    model.params = {k: params[k] for k in sorted(params)}
    return model


def _param_shapes(model):
    return {k: v.shape for k, v in model.init(Rng(0)).params.items()}


def save(model: FieldModel, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


def load(path) -> FieldModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
