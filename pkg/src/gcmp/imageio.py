"""Binary PGM and PFM image I/O.

Images are processed internally as float64 intensities in [0, 255]; 8-bit
PGM is the interchange format.  Ground-truth disparities are accepted as PFM
or 16-bit PGM with a scale factor.
"""

from __future__ import annotations

import os

import numpy as np


class ImageFormatError(ValueError):
    pass


def _read_pnm_header(data: bytes) -> tuple[bytes, int, int, int, int]:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        magic, w, h, maxval = (tokens[0], int(tokens[1]), int(tokens[2]),
                               int(tokens[3]))
    except ValueError as exc:
        raise ImageFormatError(f"malformed PNM header: {exc}") from exc
    return magic, w, h, maxval, pos


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, pos = _read_pnm_header(data)
    if magic != b"P5":
        raise ImageFormatError(f"not a binary PGM: {path}")
    if maxval < 256:
        arr = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
    else:
        arr = np.frombuffer(data, dtype=">u2", count=w * h, offset=pos)
    return arr.reshape(h, w).astype(np.float64)


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write an 8-bit binary PGM atomically (temp file then rename)."""
    arr = np.clip(np.round(image), 0, 255).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode()
    _atomic_write(path, header + arr.tobytes())


def read_pfm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    lines = data.split(b"\n", 3)
    if lines[0].strip() not in (b"Pf", b"PF"):
        raise ImageFormatError(f"not a PFM file: {path}")
    if lines[0].strip() == b"PF":
        raise ImageFormatError("color PFM not supported")
    w, h = map(int, lines[1].split())
    scale = float(lines[2])
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(lines[3], dtype=dtype, count=w * h).reshape(h, w)
    return arr[::-1].astype(np.float64)  # PFM stores rows bottom-up


def write_pfm(path: str, image: np.ndarray) -> None:
    arr = np.asarray(image, dtype=np.float32)[::-1]
    header = f"Pf\n{arr.shape[1]} {arr.shape[0]}\n-1.0\n".encode()
    _atomic_write(path, header + arr.astype("<f4").tobytes())


def read_disparity(path: str, scale: float = 1.0) -> np.ndarray:
    """Read a ground-truth disparity map (PFM, or 16-bit PGM with a scale)."""
    if path.endswith(".pfm"):
        return read_pfm(path) * scale
    return read_pgm(path) * scale


def _atomic_write(path: str, payload: bytes) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_bytes(path: str, payload: bytes) -> None:
    _atomic_write(path, payload)
