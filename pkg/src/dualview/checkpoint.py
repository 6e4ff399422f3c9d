"""Binary checkpoint format.

    b"DVNC"                      magic
    u32                          format version (1)
    u32 + utf-8                  architecture descriptor
    u32                          tensor count
    per tensor:
        u32 + utf-8              name
        u32                      rank
        u64 * rank               extents
        f32 * prod(extents)      values

All integers and floats are little-endian.
"""

from __future__ import annotations

import io
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .models import build_model, model_from_descriptor, parse_descriptor, backbone_spec
from .tensor import Tensor

MAGIC = b"DVNC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _put_str(buf, text: str) -> None:
    raw = text.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _get(buf, fmt: str):
    size = struct.calcsize(fmt)
    raw = buf.read(size)
    if len(raw) != size:
        raise CheckpointError("truncated checkpoint")
    return struct.unpack(fmt, raw)


def _get_str(buf) -> str:
    (n,) = _get(buf, "<I")
    raw = buf.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated checkpoint")
    return raw.decode("utf-8")


def dumps(descriptor: str, tensors: "OrderedDict[str, np.ndarray]") -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    _put_str(buf, descriptor)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        _put_str(buf, name)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(data: bytes) -> tuple[str, "OrderedDict[str, np.ndarray]"]:
    buf = io.BytesIO(data)
    if buf.read(4) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    (version,) = _get(buf, "<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    descriptor = _get_str(buf)
    (count,) = _get(buf, "<I")
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        name = _get_str(buf)
        (rank,) = _get(buf, "<I")
        shape = _get(buf, f"<{rank}Q") if rank else ()
        n = int(np.prod(shape)) if shape else 1
        raw = buf.read(4 * n)
        if len(raw) != 4 * n:
            raise CheckpointError(f"truncated data for tensor {name!r}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    if buf.read(1):
        raise CheckpointError("trailing bytes after last tensor")
    return descriptor, tensors


def model_bytes(model) -> bytes:
    return dumps(model.descriptor, OrderedDict((k, v.data) for k, v in model.params.items()))


def save(model, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def model_from_bytes(data: bytes, dropout_p: float = 0.1):
    descriptor, tensors = loads(data)
    fields = parse_descriptor(descriptor)
    template = build_model(fields["kind"], backbone_spec(fields["backbone"], int(fields.get("input_size", 224))),
                           np.random.default_rng(0))
    expected = {k: v.shape for k, v in template.params.items()}
    got = {k: v.shape for k, v in tensors.items()}
    if expected != got:
        missing = sorted(set(expected) - set(got))
        extra = sorted(set(got) - set(expected))
        raise CheckpointError(f"checkpoint tensors do not match {descriptor!r}: "
                              f"missing {missing[:3]}, unexpected {extra[:3]}")
    params = OrderedDict((k, Tensor(tensors[k], True, k)) for k in template.params)
    return model_from_descriptor(descriptor, params, dropout_p)


def load(path, dropout_p: float = 0.1):
    return model_from_bytes(Path(path).read_bytes(), dropout_p)
