"""Binary checkpoint archive with a bitwise round trip.

Layout (all integers little-endian):
  magic 'SCKP' | u32 version | u32 entry count
  per entry: u16 name length | name utf-8 | u8 rank | u32 extents...
             | u8 dtype tag (1 = float32, 2 = float64) | raw values, LE,
               row-major with the last axis fastest
"""

import struct

import numpy as np

MAGIC = b"SCKP"
VERSION = 1

_TAGS = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_BY_DTYPE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params):
    """Serialize parameters (name -> values) in their given order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            arr = np.ascontiguousarray(p.value.data)
            fh.write(struct.pack("<H", len(name)))
            fh.write(name)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(struct.pack("<B", _BY_DTYPE[arr.dtype]))
            fh.write(arr.astype(_TAGS[_BY_DTYPE[arr.dtype]], copy=False).tobytes())


def load_checkpoint(path):
    """Read the archive back as an ordered {name: array} dict."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint archive (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out = {}
    at = 12
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, at)
        at += 2
        name = data[at:at + nlen].decode("utf-8")
        at += nlen
        rank = data[at]
        at += 1
        shape = struct.unpack_from(f"<{rank}I", data, at)
        at += 4 * rank
        tag = data[at]
        at += 1
        if tag not in _TAGS:
            raise CheckpointError(f"unknown dtype tag {tag} for {name!r}")
        dt = _TAGS[tag]
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype=dt, count=n, offset=at).reshape(shape)
        at += n * dt.itemsize
        out[name] = arr.astype(dt.newbyteorder("="))
    if at != len(data):
        raise CheckpointError(f"{len(data) - at} trailing bytes in archive")
    return out


def restore_parameters(params, archive):
    """Copy archive values into params; reject on the first mismatch."""
    for p in params:
        if p.name not in archive:
            raise CheckpointError(f"checkpoint is missing parameter {p.name!r}")
        arr = archive[p.name]
        if tuple(arr.shape) != tuple(p.value.shape):
            raise CheckpointError(f"parameter {p.name!r}: checkpoint shape "
                                  f"{arr.shape} != model shape {p.value.shape}")
        if arr.dtype != p.value.dtype:
            raise CheckpointError(f"parameter {p.name!r}: checkpoint dtype "
                                  f"{arr.dtype} != model dtype {p.value.dtype}")
        p.value.data[...] = arr
