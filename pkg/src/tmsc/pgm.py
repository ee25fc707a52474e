"""8-bit binary PGM (P5) reading and writing."""

from __future__ import annotations

import os

import numpy as np


class PGMError(ValueError):
    pass


def to_u8(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats -> uint8 by rounding."""
    return np.clip(np.rint(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def encode_pgm(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise PGMError(f"PGM payload must be uint8, got {pixels.dtype}")
    if pixels.ndim != 2 or pixels.size == 0:
        raise PGMError(f"PGM payload must be a non-empty 2-D array, got {pixels.shape}")
    h, w = pixels.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(pixels).tobytes()


def write_pgm(path, pixels: np.ndarray) -> None:
    """Write a uint8 array, or floats in [0, 1], atomically."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        pixels = to_u8(pixels)
    payload = encode_pgm(pixels)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def decode_pgm(raw: bytes) -> np.ndarray:
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PGMError("truncated PGM header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte before the raster
    if fields[0] != b"P5":
        raise PGMError(f"not a binary PGM (magic {fields[0]!r})")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise PGMError("malformed PGM header") from None
    if maxval != 255:
        raise PGMError(f"only 8-bit PGM is supported (maxval {maxval})")
    body = raw[pos : pos + w * h]
    if len(body) != w * h:
        raise PGMError(f"truncated PGM raster: {len(body)} of {w * h} bytes")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_pgm(fh.read())


def read_pgm_float(path) -> np.ndarray:
    return read_pgm(path).astype(np.float64) / 255.0
