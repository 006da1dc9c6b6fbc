"""Binary Netpbm images: 8-bit PGM (P5) and PPM (P6), bit-exact round trip."""

import numpy as np


def write_pgm(path, gray):
    """Write a [H, W] uint8 array as binary PGM."""
    a = np.ascontiguousarray(gray, dtype=np.uint8)
    if a.ndim != 2:
        raise ValueError(f"PGM needs a 2-D array, got shape {a.shape}")
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        fh.write(a.tobytes())


def write_ppm(path, rgb):
    """Write a [H, W, 3] uint8 array as binary PPM."""
    a = np.ascontiguousarray(rgb, dtype=np.uint8)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"PPM needs a [H, W, 3] array, got shape {a.shape}")
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (a.shape[1], a.shape[0]))
        fh.write(a.tobytes())


def _read_tokens(data, count):
    """First `count` whitespace-separated header tokens, skipping # comments.

    Returns (tokens, offset of the byte after the single whitespace that
    terminates the last token)."""
    tokens = []
    i = 0
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        start = i
        while i < len(data) and not data[i:i + 1].isspace():
            i += 1
        if start == i:
            raise ValueError("truncated Netpbm header")
        tokens.append(data[start:i])
    return tokens, i + 1


def _read(path, magic, channels):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _read_tokens(data, 4)
    if tokens[0] != magic:
        raise ValueError(f"expected {magic.decode()} file, got {tokens[0]!r}")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"only 8-bit Netpbm supported, maxval={maxval}")
    need = width * height * channels
    raster = data[offset:offset + need]
    if len(raster) != need:
        raise ValueError(f"raster truncated: {len(raster)} of {need} bytes")
    a = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return a.reshape(height, width)
    return a.reshape(height, width, channels)


def read_pgm(path):
    return _read(path, b"P5", 1)


def read_ppm(path):
    return _read(path, b"P6", 3)
