"""Binary containers: single tensors (MFHT) and named weight sets (MFHW).

MFHT layout::

    b"MFHT" | u8 version=1 | u8 dtype (1=f32, 2=f64) | u8 rank | rank x u32 dims | payload

MFHW layout::

    b"MFHW" | u8 version=1 | u32 header length | UTF-8 JSON header | payloads

The MFHW header maps each tensor name to ``{"dtype": "f32"|"f64", "dims": [...],
"offset": int}`` where ``offset`` counts bytes from the start of the payload
section. All integers and payloads are little-endian, payloads row-major.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MFHT_MAGIC = b"MFHT"
MFHW_MAGIC = b"MFHW"
VERSION = 1

_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_OF = {np.dtype("float32"): 1, np.dtype("float64"): 2}
_DTYPE_NAMES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_NAME_OF = {np.dtype("float32"): "f32", np.dtype("float64"): "f64"}


def _pick_dtype(arr, dtype):
    dt = np.dtype(dtype) if dtype is not None else arr.dtype
    if dt not in _CODE_OF:
        dt = np.dtype("float64")
    return dt


def encode_tensor(arr, dtype=None) -> bytes:
    arr = np.asarray(arr)
    dt = _pick_dtype(arr, dtype)
    if arr.ndim > 255:
        raise FormatError("rank exceeds 255")
    head = MFHT_MAGIC + struct.pack("<BBB", VERSION, _CODE_OF[dt], arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=dt.newbyteorder("<")).tobytes()


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 7:
        raise FormatError("truncated MFHT header", offset=len(buf))
    if buf[:4] != MFHT_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MFHT_MAGIC!r}", offset=0)
    version, code, rank = struct.unpack_from("<BBB", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported MFHT version {version}", offset=4)
    if code not in _DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}", offset=5)
    off = 7
    if len(buf) < off + 4 * rank:
        raise FormatError("truncated MFHT dims", offset=len(buf))
    dims = struct.unpack_from(f"<{rank}I", buf, off)
    off += 4 * rank
    dt = _DTYPE_CODES[code]
    count = int(np.prod(dims, dtype=np.int64))
    need = off + count * dt.itemsize
    if len(buf) < need:
        raise FormatError(f"truncated payload: need {need} bytes, have {len(buf)}", offset=len(buf))
    if len(buf) > need:
        raise FormatError(f"{len(buf) - need} trailing bytes after payload", offset=need)
    return np.frombuffer(buf, dtype=dt, count=count, offset=off).reshape(dims).astype(dt.newbyteorder("="))


def save_tensor(path, arr, dtype=None) -> None:
    Path(path).write_bytes(encode_tensor(arr, dtype))


def load_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def encode_weights(tensors: dict, dtype=None) -> bytes:
    header = {}
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        dt = _pick_dtype(arr, dtype)
        raw = np.ascontiguousarray(arr, dtype=dt.newbyteorder("<")).tobytes()
        header[name] = {"dtype": _NAME_OF[dt], "dims": list(arr.shape), "offset": offset}
        chunks.append(raw)
        offset += len(raw)
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    return MFHW_MAGIC + struct.pack("<BI", VERSION, len(hbytes)) + hbytes + b"".join(chunks)


def decode_weights(buf: bytes) -> dict[str, np.ndarray]:
    if len(buf) < 9:
        raise FormatError("truncated MFHW header", offset=len(buf))
    if buf[:4] != MFHW_MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MFHW_MAGIC!r}", offset=0)
    version, hlen = struct.unpack_from("<BI", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported MFHW version {version}", offset=4)
    start = 9 + hlen
    if len(buf) < start:
        raise FormatError("truncated JSON header", offset=len(buf))
    try:
        header = json.loads(buf[9:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable JSON header: {exc}", offset=9) from None
    out = {}
    for name, entry in header.items():
        try:
            dt = _DTYPE_NAMES[entry["dtype"]]
            dims = tuple(int(d) for d in entry["dims"])
            off = start + int(entry["offset"])
        except (KeyError, TypeError, ValueError):
            raise FormatError(f"malformed header entry for {name!r}", offset=9) from None
        count = int(np.prod(dims, dtype=np.int64))
        if off + count * dt.itemsize > len(buf):
            raise FormatError(f"payload of {name!r} runs past end of file", offset=off)
        out[name] = np.frombuffer(buf, dtype=dt, count=count, offset=off).reshape(dims).astype(
            dt.newbyteorder("=")
        )
    return out


def save_weights(path, tensors: dict, dtype=None) -> None:
    Path(path).write_bytes(encode_weights(tensors, dtype))


def load_weights(path) -> dict[str, np.ndarray]:
    return decode_weights(Path(path).read_bytes())
