"""Binary checkpoint container: named float64 arrays plus string metadata.

Layout (all integers little-endian):
    magic   4 bytes  b"TACK"
    version u16
    nmeta   u32, then nmeta x (u16 key len, key utf-8, u32 value len, value)
    nparams u32, then per parameter, sorted by name:
        u16 name len, name utf-8, u8 ndim, ndim x u32 dims,
        raw little-endian float64 payload

Entries are written in sorted-name order so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError

MAGIC = b"TACK"
VERSION = 1


def save_checkpoint(path, params, meta=None):
    """Write ``params`` (name -> array) and ``meta`` (str -> str) to disk."""
    meta = dict(meta or {})
    chunks = [MAGIC, struct.pack("<H", VERSION), struct.pack("<I", len(meta))]
    for key in sorted(meta):
        kb = key.encode("utf-8")
        vb = str(meta[key]).encode("utf-8")
        chunks.append(struct.pack("<H", len(kb)))
        chunks.append(kb)
        chunks.append(struct.pack("<I", len(vb)))
        chunks.append(vb)
    chunks.append(struct.pack("<I", len(params)))
    for name in sorted(params):
        arr = np.asarray(params[name], dtype="<f8")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise DataError(f"checkpoint {self.path} truncated at byte {self.pos}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]


def load_checkpoint(path):
    """Read a checkpoint, returning ``(params, meta)``."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as err:
        raise DataError(f"cannot read checkpoint {path}: {err}") from err
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise DataError(f"checkpoint {path} has wrong magic bytes")
    version = r.unpack("<H")
    if version != VERSION:
        raise DataError(f"checkpoint {path} has unsupported version {version}")
    meta = {}
    for _ in range(r.unpack("<I")):
        key = r.take(r.unpack("<H")).decode("utf-8")
        meta[key] = r.take(r.unpack("<I")).decode("utf-8")
    params = {}
    for _ in range(r.unpack("<I")):
        name = r.take(r.unpack("<H")).decode("utf-8")
        if name in params:
            raise DataError(f"checkpoint {path} repeats parameter {name!r}")
        ndim = r.unpack("<B")
        shape = tuple(r.unpack("<I") for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = r.take(count * 8)
        params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if r.pos != len(blob):
        raise DataError(f"checkpoint {path} has {len(blob) - r.pos} trailing bytes")
    return params, meta
