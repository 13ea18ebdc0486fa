"""Binary PPM (P6) and PGM (P5) with maxval 255: the only image formats
this package reads or writes.  Bit-exact, no external decoders."""

from __future__ import annotations

import numpy as np

__all__ = ["read_pnm", "write_pgm", "write_ppm", "PnmError"]


class PnmError(Exception):
    pass


def _read_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First `count` whitespace/comment-delimited header tokens and the
    offset just past the single whitespace byte that ends the last one."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PnmError("truncated header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pnm(path: str) -> np.ndarray:
    """Read a P5 PGM as (h, w) uint8 or a P6 PPM as (h, w, 3) uint8."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"P5", b"P6"):
        raise PnmError(f"{path}: not a binary PGM/PPM (magic {data[:2]!r})")
    channels = 1 if data[:2] == b"P5" else 3
    tokens, offset = _read_tokens(data[2:], 3)
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise PnmError(f"{path}: bad header: {exc}") from exc
    if maxval != 255:
        raise PnmError(f"{path}: only maxval 255 supported, got {maxval}")
    need = w * h * channels
    raster = data[2 + offset:2 + offset + need]
    if len(raster) != need:
        raise PnmError(f"{path}: raster has {len(raster)} bytes, expected {need}")
    img = np.frombuffer(raster, dtype=np.uint8)
    return img.reshape((h, w) if channels == 1 else (h, w, 3))


def _write(path: str, magic: bytes, img: np.ndarray) -> None:
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def write_pgm(path: str, img) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise PnmError(f"PGM needs a 2-D array, got shape {img.shape}")
    _write(path, b"P5", img)


def write_ppm(path: str, img) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise PnmError(f"PPM needs an (h, w, 3) array, got shape {img.shape}")
    _write(path, b"P6", img)
