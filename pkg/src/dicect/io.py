"""File formats: binary PGM images, raw float64 sidecars and sinogram files.

Sinogram files are a 24-byte header (``b"DICESINO"``, u32 n_angles,
u32 n_detectors, u64 reserved; little-endian) followed by the data as
little-endian float64, angle-major.
"""

from __future__ import annotations

import os
import re
import struct
from pathlib import Path

import numpy as np

from dicect.errors import DiceError

SINO_MAGIC = b"DICESINO"
SINO_HEADER = struct.Struct("<8sIIQ")


class FileFormatError(DiceError, OSError):
    """A file could not be parsed; the message names the file."""


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def read_pgm(path):
    """Read a binary (P5) PGM as float64 scaled to ``[0, 1]``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc.strerror or exc}") from exc
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(raw, pos)
        if m is None:
            raise FileFormatError(f"{path}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise FileFormatError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise FileFormatError(f"{path}: malformed PGM header") from None
    if not 0 < maxval < 65536 or width < 1 or height < 1:
        raise FileFormatError(f"{path}: unsupported PGM header {width}x{height} max {maxval}")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    if len(raw) - pos < count * dtype.itemsize:
        raise FileFormatError(f"{path}: truncated PGM pixel data")
    pixels = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    return pixels.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path, img, bits=16):
    """Write ``img`` (clipped to ``[0, 1]``) as an 8- or 16-bit binary PGM."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    img = np.asarray(img, dtype=np.float64)
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    data = q.astype(">u2" if bits == 16 else "u1").tobytes()
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (w, h, maxval))
        fh.write(data)


def load_image_dir(path):
    """All ``*.pgm`` images in ``path`` sorted by filename, as ``(stem, image)`` pairs."""
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".pgm") if path.is_dir() else []
    if not files:
        raise FileFormatError(f"{path}: no PGM images found")
    out = []
    for f in files:
        img = read_pgm(f)
        if img.shape[0] != img.shape[1]:
            raise FileFormatError(f"{f}: image is {img.shape[1]}x{img.shape[0]}, expected square")
        if out and img.shape != out[0][1].shape:
            raise FileFormatError(f"{f}: size {img.shape} differs from {out[0][1].shape}")
        out.append((f.stem, img))
    return out


def write_raw(path, arr):
    np.asarray(arr, dtype="<f8").tofile(path)


def read_raw(path, shape=None):
    """Read a headerless float64 array; square 2-D when ``shape`` is omitted."""
    try:
        data = np.fromfile(path, dtype="<f8")
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if shape is None:
        side = int(round(np.sqrt(data.size)))
        if side * side != data.size:
            raise FileFormatError(f"{path}: {data.size} values do not form a square image")
        shape = (side, side)
    if int(np.prod(shape)) != data.size:
        raise FileFormatError(f"{path}: expected {int(np.prod(shape))} values, found {data.size}")
    return data.astype(np.float64).reshape(shape)


def write_sinogram(path, data):
    data = np.asarray(data, dtype="<f8")
    if data.ndim != 2:
        raise ValueError("sinogram data must be 2-D (angles, detectors)")
    with open(path, "wb") as fh:
        fh.write(SINO_HEADER.pack(SINO_MAGIC, data.shape[0], data.shape[1], 0))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_sinogram(path):
    """Return the ``(n_angles, n_detectors)`` array stored in a sinogram file."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc.strerror or exc}") from exc
    if len(raw) < SINO_HEADER.size:
        raise FileFormatError(f"{path}: truncated sinogram header")
    magic, n_angles, n_det, _ = SINO_HEADER.unpack_from(raw)
    if magic != SINO_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    expected = SINO_HEADER.size + 8 * n_angles * n_det
    if len(raw) != expected:
        raise FileFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=SINO_HEADER.size).reshape(n_angles, n_det).astype(np.float64)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
