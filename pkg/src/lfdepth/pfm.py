"""Portable float map (single-channel ``Pf``) reader and writer.

Layout: ``Pf\\n<width> <height>\\n<scale>\\n`` followed by ``width * height``
32-bit floats, bottom row first; a negative scale means little-endian.
Values are kept as ``float32`` so a write/read round trip is bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .lightfield import DisparityField


def _header_tokens(buf: bytes, path) -> tuple[list[bytes], int]:
    """First four whitespace-separated tokens and the offset of the payload."""
    tokens: list[bytes] = []
    pos = 0
    n = len(buf)
    while len(tokens) < 4:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataFormatError("truncated PFM header", path)
        tokens.append(buf[start:pos])
        if len(tokens) == 1 and tokens[0] != b"Pf":
            break
    if pos >= n and len(tokens) == 4:
        # header without the single terminating whitespace byte
        return tokens, pos
    return tokens, pos + 1  # exactly one whitespace byte ends the header


def read_pfm_array(path) -> np.ndarray:
    """Read a ``Pf`` file as a top-row-first ``float32`` array."""
    path = Path(path)
    buf = path.read_bytes()
    if not buf:
        raise DataFormatError("empty file", path)
    tokens, offset = _header_tokens(buf, path)
    magic = tokens[0]
    if magic == b"PF":
        raise DataFormatError("color PFM ('PF') is not supported; expected single-channel 'Pf'", path)
    if magic != b"Pf":
        raise DataFormatError(f"bad PFM magic {magic[:8]!r}", path)
    try:
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except (ValueError, IndexError) as e:
        raise DataFormatError("malformed PFM header", path) from e
    if width < 1 or height < 1:
        raise DataFormatError(f"invalid PFM dimensions {width}x{height}", path)
    if scale == 0 or not np.isfinite(scale):
        raise DataFormatError(f"invalid PFM scale {scale}", path)
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    need = width * height * 4
    payload = buf[offset:offset + need]
    if len(payload) < need:
        raise DataFormatError(f"truncated PFM payload: {len(payload)} of {need} bytes", path)
    data = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return np.flipud(data).astype(np.float32)


def write_pfm_array(path, data) -> None:
    """Write a 2D array as little-endian ``Pf`` (values cast to ``float32``)."""
    a = np.asarray(data)
    if a.ndim != 2:
        raise ValueError(f"PFM data must be 2D, got shape {a.shape}")
    height, width = a.shape
    payload = np.ascontiguousarray(np.flipud(a.astype("<f4")))
    with open(path, "wb") as f:
        f.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(payload.tobytes())


def read_pfm(path) -> DisparityField:
    """Read a disparity map; non-finite values are marked invalid with confidence 0."""
    d = read_pfm_array(path)
    valid = np.isfinite(d)
    return DisparityField(d, confidence=valid.astype(float), valid_mask=valid)


def write_pfm(field, path) -> None:
    """Write the disparity of a :class:`DisparityField` (or a plain 2D array)."""
    data = field.disparity if isinstance(field, DisparityField) else field
    write_pfm_array(path, data)
