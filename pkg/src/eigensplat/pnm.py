"""Netpbm image reader (P2/P5 graymaps, P3/P6 pixmaps), normalised to [0, 1]."""

from __future__ import annotations

import numpy as np

from .model import GrayImage

_MAGIC = {b"P2": (1, False), b"P5": (1, True), b"P3": (3, False), b"P6": (3, True)}


class PnmError(ValueError):
    pass


def _tokens(data: bytes, count: int, pos: int):
    """Read ``count`` whitespace separated header tokens, skipping # comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PnmError("truncated header")
        out.append(data[start:pos])
    return out, pos


def parse_pnm(data: bytes) -> GrayImage:
    magic = data[:2]
    if magic not in _MAGIC:
        raise PnmError(f"unsupported image type {magic!r}; expected P2, P3, P5 or P6")
    channels, binary = _MAGIC[magic]
    try:
        (w, h, maxval), pos = _tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise PnmError("bad header") from exc
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise PnmError("bad header values")
    count = w * h * channels
    if binary:
        pos += 1  # single whitespace byte after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        need = count * np.dtype(dtype).itemsize
        body = data[pos : pos + need]
        if len(body) != need:
            raise PnmError("unexpected end of pixel data")
        vals = np.frombuffer(body, dtype=dtype).astype(np.float64)
    else:
        try:
            vals = np.array(data[pos:].split()[:count], dtype=np.float64)
        except ValueError as exc:
            raise PnmError("non-numeric pixel data") from exc
        if vals.size != count:
            raise PnmError("unexpected end of pixel data")
    if vals.max(initial=0) > maxval:
        raise PnmError("pixel value above maxval")
    return GrayImage.from_flat(w, h, vals / maxval, channels)


def read_pnm(path) -> GrayImage:
    with open(path, "rb") as f:
        return parse_pnm(f.read())


def write_pnm(img: GrayImage, path, maxval: int = 255) -> None:
    """Write binary P5/P6, rounding pixels to ``maxval`` levels."""
    magic = b"P5" if img.channels == 1 else b"P6"
    q = np.rint(np.clip(img.pixels, 0, 1) * maxval).astype(">u2" if maxval > 255 else "u1")
    with open(path, "wb") as f:
        f.write(magic + f"\n{img.width} {img.height}\n{maxval}\n".encode("ascii"))
        f.write(q.tobytes())
