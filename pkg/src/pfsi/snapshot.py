"""Binary field snapshots.

Layout (little-endian):

    magic   4 bytes  b"PFSI"
    version uint16
    dims    uint8    spatial dimension of the run
    ncomp   uint32   number of components
    ndim    uint8    number of grid axes
    shape   ndim x uint64
    time    float64
    namelen uint16, then the UTF-8 field name
    payload ncomp * prod(shape) float64, row-major

The payload length must match the header exactly.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptSnapshot, VersionMismatch

MAGIC = b"PFSI"
VERSION = 1


@dataclass(frozen=True)
class FieldSnapshot:
    name: str
    data: np.ndarray
    time: float = 0.0
    dims: int = 2

    @property
    def components(self):
        return self.data.shape[0]

    @property
    def grid_shape(self):
        return self.data.shape[1:]

    @classmethod
    def scalar(cls, name, values, time=0.0, dims=2):
        values = np.asarray(values, dtype=float)
        return cls(name, values[None], time, dims)


def encode_snapshot(snap, version=VERSION):
    data = np.ascontiguousarray(snap.data, dtype="<f8")
    if data.ndim < 1:
        raise ValueError("snapshot data needs a component axis")
    shape = data.shape[1:]
    name = snap.name.encode("utf-8")
    head = struct.pack("<4sHBIB", MAGIC, version, snap.dims, data.shape[0], len(shape))
    head += struct.pack(f"<{len(shape)}Q", *shape)
    head += struct.pack("<dH", float(snap.time), len(name)) + name
    return head + data.tobytes(order="C")


def decode_snapshot(blob):
    view = memoryview(blob)
    fixed = struct.calcsize("<4sHBIB")
    if len(view) < fixed:
        raise CorruptSnapshot("snapshot shorter than its header")
    magic, version, dims, ncomp, ndim = struct.unpack_from("<4sHBIB", view, 0)
    if magic != MAGIC:
        raise CorruptSnapshot(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatch(f"snapshot version {version}, reader supports {VERSION}")
    pos = fixed
    need = pos + 8 * ndim + struct.calcsize("<dH")
    if len(view) < need:
        raise CorruptSnapshot("truncated snapshot header")
    shape = struct.unpack_from(f"<{ndim}Q", view, pos)
    pos += 8 * ndim
    time, namelen = struct.unpack_from("<dH", view, pos)
    pos += struct.calcsize("<dH")
    if len(view) < pos + namelen:
        raise CorruptSnapshot("truncated field name")
    try:
        name = bytes(view[pos:pos + namelen]).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptSnapshot("field name is not UTF-8") from exc
    pos += namelen
    count = ncomp * int(np.prod(shape, dtype=np.int64))
    if len(view) - pos != 8 * count:
        raise CorruptSnapshot(f"payload has {len(view) - pos} bytes, header implies {8 * count}")
    data = np.frombuffer(view, dtype="<f8", count=count, offset=pos).reshape((ncomp,) + tuple(shape))
    return FieldSnapshot(name, data.astype(float), time, dims)


def write_snapshot(snap, path):
    with open(path, "wb") as fh:
        fh.write(encode_snapshot(snap))
    return path


def read_snapshot(path):
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read())
