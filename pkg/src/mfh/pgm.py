"""Binary PGM (P5, maxval 255) reading and writing."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError

_WS = b" \t\n\r\v\f"


def _token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited header token, skipping ``#`` comments."""
    n = len(buf)
    while pos < n:
        if buf[pos] in _WS:
            pos += 1
        elif buf[pos] == ord("#"):
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos] not in _WS and buf[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise FormatError("truncated PGM header", offset=pos)
    return buf[start:pos], pos


def _int_field(buf, pos, what):
    tok, end = _token(buf, pos)
    if not tok.isdigit():
        raise FormatError(f"expected integer {what}, got {tok[:16]!r}", offset=end - len(tok))
    return int(tok), end


def decode_pgm(buf: bytes, invert: bool = False) -> np.ndarray:
    """Decode P5 bytes into a ``1 x H x W`` float64 array in [0, 1]."""
    if buf[:2] != b"P5":
        raise FormatError(f"bad magic {buf[:2]!r}, expected b'P5'", offset=0)
    pos = 2
    width, pos = _int_field(buf, pos, "width")
    height, pos = _int_field(buf, pos, "height")
    maxval, pos = _int_field(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise FormatError(f"empty image {width}x{height}", offset=pos)
    if maxval != 255:
        raise FormatError(f"maxval {maxval} unsupported, only 255", offset=pos)
    if pos >= len(buf) or buf[pos] not in _WS:
        raise FormatError("missing whitespace before raster", offset=pos)
    pos += 1
    need = width * height
    if len(buf) - pos < need:
        raise FormatError(f"truncated raster: need {need} bytes, have {len(buf) - pos}", offset=len(buf))
    data = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos).astype(np.float64) / 255.0
    img = data.reshape(1, height, width)
    return 1.0 - img if invert else img


def read_pgm(path, invert: bool = False) -> np.ndarray:
    return decode_pgm(Path(path).read_bytes(), invert)


def to_bytes8(image) -> np.ndarray:
    """Stretch min..max to 0..255; a constant image maps to 0."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise FormatError(f"can only write single-channel images, got {arr.shape}")
        arr = arr[0]
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        return np.zeros(arr.shape, dtype=np.uint8)
    return np.rint((arr - lo) / (hi - lo) * 255.0).astype(np.uint8)


def encode_pgm(image) -> bytes:
    raster = to_bytes8(image)
    h, w = raster.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + raster.tobytes()


def write_pgm(image, path) -> None:
    Path(path).write_bytes(encode_pgm(image))
