"""Binary parameter checkpoints.

Layout (all little-endian):

    magic           4 bytes  b"P2P1"
    n_params        uint32
    per parameter:
        name_len    uint16
        name        UTF-8 bytes
        rank        uint8
        dims        uint32 * rank
        data        float32 * prod(dims), row-major
    has_optimizer   uint8 (0 or 1)
    if 1:
        step        uint64
        lr, beta1, beta2, epsilon   float64 each
        per parameter (same order): float32 m then float32 v arrays

Values are stored as 32-bit floats regardless of the in-memory dtype.
"""

from __future__ import annotations

import struct
from typing import Optional, Sequence

import numpy as np

from ..errors import DataError
from .optim import AdamState
from .tensor import Parameter

MAGIC = b"P2P1"


def save_checkpoint(path, params: Sequence[Parameter], optimizer: Optional[AdamState] = None) -> None:
    seen = set()
    for p in params:
        if not p.name:
            raise DataError("checkpoint parameters need non-empty names")
        if p.name in seen:
            raise DataError(f"duplicate parameter name {p.name!r}")
        seen.add(p.name)
    if optimizer is not None and optimizer.m and len(optimizer.m) != len(params):
        raise DataError("optimizer state does not match the parameter list")

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
        if optimizer is None or not optimizer.m:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            fh.write(struct.pack("<Q", optimizer.step))
            fh.write(struct.pack("<4d", optimizer.learning_rate, optimizer.beta1,
                                 optimizer.beta2, optimizer.epsilon))
            for m, v in zip(optimizer.m, optimizer.v):
                fh.write(np.ascontiguousarray(m, dtype="<f4").tobytes())
                fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (ordered name->float32 array dict, AdamState or None)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise DataError(f"not a checkpoint file: bad magic {blob[:4]!r}")
    offset = 4

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise DataError("checkpoint truncated")
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    (n_params,) = take("<I")
    arrays: dict = {}
    shapes = []
    for _ in range(n_params):
        (name_len,) = take("<H")
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = take("<B")
        dims = take(f"<{rank}I") if rank else ()
        count = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(dims)
        offset += 4 * count
        if name in arrays:
            raise DataError(f"duplicate parameter name {name!r} in checkpoint")
        arrays[name] = data.copy()
        shapes.append(count)

    (has_opt,) = take("<B")
    optimizer = None
    if has_opt:
        (step,) = take("<Q")
        lr, beta1, beta2, epsilon = take("<4d")
        m, v = [], []
        for count, shape in zip(shapes, arrays.values()):
            m.append(np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape.shape).copy())
            offset += 4 * count
            v.append(np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape.shape).copy())
            offset += 4 * count
        optimizer = AdamState(learning_rate=lr, beta1=beta1, beta2=beta2, epsilon=epsilon,
                              step=step, m=m, v=v)
    if offset != len(blob):
        raise DataError("checkpoint has trailing bytes")
    return arrays, optimizer


def load_into(params: Sequence[Parameter], path) -> Optional[AdamState]:
    """Copy checkpoint values into existing parameters, matching by name."""
    arrays, optimizer = load_checkpoint(path)
    names = {p.name for p in params}
    missing = names - set(arrays)
    extra = set(arrays) - names
    if missing or extra:
        raise DataError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for p in params:
        stored = arrays[p.name]
        if stored.shape != p.data.shape:
            raise DataError(f"parameter {p.name!r} has shape {p.data.shape}, checkpoint {stored.shape}")
        p.data = stored.astype(p.data.dtype)
    return optimizer
