"""CSKT tensor container and binary PPM images."""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"CSKT"
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1")}
CODES = {np.dtype("<f4"): 0, np.dtype("u1"): 1}
_HEADER = struct.Struct("<4sBBH")


class EpisodeFormatError(ValueError):
    """A file could not be parsed; names the file and byte offset."""

    def __init__(self, path, offset: int, msg: str):
        super().__init__(f"{path}: offset {offset}: {msg}")
        self.path = str(path)
        self.offset = offset


class IntegrityError(ValueError):
    """Episode files disagree with each other or are truncated."""


def encode_tensor(arr) -> bytes:
    a = np.asarray(arr)
    if a.dtype == np.float64 or a.dtype == np.float32:
        a = a.astype("<f4")
    elif a.dtype == np.uint8:
        a = a.astype("u1")
    else:
        raise TypeError(f"CSKT stores float32 or uint8, got {a.dtype}")
    code = CODES[a.dtype]
    head = _HEADER.pack(MAGIC, code, a.ndim, 0) + struct.pack(f"<{a.ndim}I", *a.shape)
    return head + np.ascontiguousarray(a).tobytes()


def decode_tensor(data: bytes, path="<bytes>") -> np.ndarray:
    if len(data) < _HEADER.size:
        raise IntegrityError(f"{path}: header truncated ({len(data)} bytes)")
    magic, code, rank, reserved = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise EpisodeFormatError(path, 0, f"bad magic {magic!r}")
    if code not in DTYPES:
        raise EpisodeFormatError(path, 4, f"unknown dtype code {code}")
    if reserved != 0:
        raise EpisodeFormatError(path, 6, f"reserved field is {reserved}, expected 0")
    off = _HEADER.size
    if len(data) < off + 4 * rank:
        raise IntegrityError(f"{path}: dims truncated")
    dims = struct.unpack_from(f"<{rank}I", data, off)
    off += 4 * rank
    dt = DTYPES[code]
    n = int(np.prod(dims)) if rank else 1
    need = n * dt.itemsize
    if len(data) - off != need:
        raise IntegrityError(f"{path}: payload is {len(data) - off} bytes, header implies {need}")
    return np.frombuffer(data, dtype=dt, count=n, offset=off).reshape(dims).copy()


def write_tensor(path, arr):
    with open(path, "wb") as f:
        f.write(encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_tensor(f.read(), path)


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PPM images are HxWx3 uint8, got {img.dtype} {img.shape}")
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img).tobytes()


def decode_ppm(data: bytes, path="<bytes>") -> np.ndarray:
    fields, off = [], 0
    while len(fields) < 4:
        while off < len(data) and data[off:off + 1].isspace():
            off += 1
        if off < len(data) and data[off:off + 1] == b"#":
            while off < len(data) and data[off:off + 1] != b"\n":
                off += 1
            continue
        start = off
        while off < len(data) and not data[off:off + 1].isspace():
            off += 1
        if start == off:
            raise EpisodeFormatError(path, off, "PPM header truncated")
        fields.append(data[start:off])
    if fields[0] != b"P6":
        raise EpisodeFormatError(path, 0, f"not a binary PPM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(x) for x in fields[1:])
    except ValueError:
        raise EpisodeFormatError(path, off, "non-numeric PPM header field") from None
    if maxval != 255:
        raise EpisodeFormatError(path, off, f"unsupported maxval {maxval}")
    off += 1  # single whitespace byte before the raster
    if len(data) - off != w * h * 3:
        raise IntegrityError(f"{path}: raster is {len(data) - off} bytes, expected {w * h * 3}")
    return np.frombuffer(data, dtype=np.uint8, offset=off).reshape(h, w, 3).copy()


def write_ppm(path, img):
    with open(path, "wb") as f:
        f.write(encode_ppm(img))


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_ppm(f.read(), path)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
