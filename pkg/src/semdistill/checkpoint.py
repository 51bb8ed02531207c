"""Binary checkpoint format shared by teacher and student models.

Layout (little-endian):
  magic "D2CK" | u32 version=1 | u32 config_len | config UTF-8 "k=v" lines |
  u32 n_tensors | per tensor: u32 name_len, name UTF-8, u8 dtype (1 = f64),
  u32 rank, u32 dims..., payload f64 LE | u64 fingerprint

Tensors are written in sorted-name order; the fingerprint is FNV-1a(64) over
the concatenated tensor payload bytes in that order.
"""

import struct

import numpy as np

from .errors import FormatError
from .numerics import Tensor

MAGIC = b"D2CK"
VERSION = 1
DTYPE_F64 = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a(data, h=_FNV_OFFSET):
    """64-bit FNV-1a over a bytes-like object, chainable via ``h``."""
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _payload(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def fingerprint_params(params):
    """FNV-1a over tensor payload bytes in sorted parameter-name order."""
    h = _FNV_OFFSET
    for name in sorted(params):
        p = params[name]
        arr = p.data if isinstance(p, Tensor) else np.asarray(p)
        h = fnv1a(_payload(arr), h)
    return h


def save_checkpoint(path, config, params):
    """Write config echo plus named tensors; returns the fingerprint."""
    cfg_blob = "".join(f"{k}={config[k]}\n" for k in sorted(config)).encode("utf-8")
    fp = _FNV_OFFSET
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            p = params[name]
            arr = p.data if isinstance(p, Tensor) else np.asarray(p)
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", DTYPE_F64))
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            blob = _payload(arr)
            fp = fnv1a(blob, fp)
            fh.write(blob)
        fh.write(struct.pack("<Q", fp))
    return fp


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise FormatError(f"truncated checkpoint {self.path}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def u8(self):
        return struct.unpack("<B", self.take(1))[0]


def load_checkpoint(path):
    """Read a checkpoint; returns (config dict, name->ndarray, fingerprint)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic, not a checkpoint")
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    cfg_blob = r.take(r.u32()).decode("utf-8")
    config = {}
    for line in cfg_blob.splitlines():
        if line:
            k, _, v = line.partition("=")
            config[k] = v
    params = {}
    fp = _FNV_OFFSET
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        dtype = r.u8()
        if dtype != DTYPE_F64:
            raise FormatError(f"{path}: unsupported tensor dtype {dtype}")
        rank = r.u32()
        dims = tuple(r.u32() for _ in range(rank))
        count = 1
        for d in dims:
            count *= d
        blob_t = r.take(count * 8)
        fp = fnv1a(blob_t, fp)
        params[name] = np.frombuffer(blob_t, dtype="<f8").reshape(dims).copy()
    stored = r.u64()
    if stored != fp:
        raise FormatError(f"{path}: fingerprint mismatch, file corrupt")
    if r.pos != len(blob):
        raise FormatError(f"{path}: trailing bytes after checkpoint")
    return config, params, fp
