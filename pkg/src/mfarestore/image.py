"""The ImageGrid raster type and its file formats.

Indexing is ``(row, col)`` with the origin at the top-left pixel and
samples stored row-major.  Two on-disk formats are supported:

* PGM: P2 and P5 on read (8- or 16-bit), 16-bit P5 on write.  Writing
  stretches ``[min, max]`` linearly onto ``[0, 65535]`` and records the
  stretch in a sidecar ``<path>.stretch`` text file.
* f64-raw: a 16-byte little-endian header (``b"MFAG"``, u32 width,
  u32 height, u32 reserved = 0) followed by ``width*height`` f64 samples.
  Lossless.
"""

from __future__ import annotations

import os
import re
import struct
from pathlib import Path

import numpy as np

from .errors import ParseError

MAGIC = b"MFAG"
_HEADER = struct.Struct("<4sIII")
PGM_MAXVAL = 65535
_P2_TOKEN = re.compile(rb"#[^\r\n]*|[^\s#]+")


class ImageGrid:
    """Immutable 2D raster of finite float64 samples.

    Parameters
    ----------
    data : array_like
        2D array of shape ``(height, width)``.  It is copied and the copy
        is marked read-only.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"ImageGrid needs a 2D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("ImageGrid dimensions must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ImageGrid samples must be finite")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def from_samples(cls, width: int, height: int, samples) -> "ImageGrid":
        samples = np.asarray(samples, dtype=np.float64).ravel()
        if samples.size != width * height:
            raise ValueError(
                f"expected {width * height} samples for {width}x{height}, got {samples.size}")
        return cls(samples.reshape(height, width))

    @classmethod
    def constant(cls, width: int, height: int, value: float = 0.0) -> "ImageGrid":
        return cls(np.full((height, width), float(value)))

    @property
    def data(self) -> np.ndarray:
        """Read-only ``(height, width)`` view of the samples."""
        return self._data

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    @property
    def samples(self) -> np.ndarray:
        return self._data.ravel()

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._data
        return self._data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, ImageGrid):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def __hash__(self):
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self):
        return f"ImageGrid(width={self.width}, height={self.height})"


def as_array(img) -> np.ndarray:
    """Float64 2D array for an ImageGrid or array-like (no copy for grids)."""
    if isinstance(img, ImageGrid):
        return img.data
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {arr.shape}")
    return arr


def scale_intensity(img, k: float) -> ImageGrid:
    """Multiply every sample by ``k``."""
    k = float(k)
    if not np.isfinite(k):
        raise ValueError("scale factor must be finite")
    return ImageGrid(as_array(img) * k)


def _format_for(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("pgm", "f64"):
            raise ValueError(f"unknown image format {fmt!r}; expected 'pgm' or 'f64'")
        return fmt
    return "pgm" if str(path).lower().endswith(".pgm") else "f64"


# -- f64-raw ---------------------------------------------------------------

def _read_f64(buf: bytes) -> ImageGrid:
    if len(buf) < _HEADER.size:
        raise ParseError("truncated f64-raw header", offset=len(buf))
    magic, width, height, _reserved = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0)
    if width < 1 or height < 1:
        raise ParseError(f"invalid dimensions {width}x{height}", offset=4)
    expected = _HEADER.size + 8 * width * height
    if len(buf) != expected:
        raise ParseError(
            f"dimension mismatch: header says {width}x{height} "
            f"({expected} bytes) but file has {len(buf)} bytes",
            offset=min(len(buf), expected))
    arr = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise ParseError("non-finite sample", offset=_HEADER.size + 8 * int(bad[0]))
    return ImageGrid(arr.reshape(height, width))


def _write_f64(img: ImageGrid, path):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, img.width, img.height, 0))
        fh.write(np.ascontiguousarray(img.data, dtype="<f8").tobytes())


# -- PGM -------------------------------------------------------------------

def _pgm_tokens(buf: bytes, start: int, count: int):
    """Read ``count`` whitespace-separated ASCII tokens, skipping comments."""
    tokens = []
    pos = start
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise ParseError("unexpected end of PGM data", offset=pos)
        begin = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        tok = buf[begin:pos]
        if not tok.isdigit():
            raise ParseError(f"expected an integer, got {tok[:16]!r}", offset=begin)
        tokens.append((int(tok), begin))
    return tokens, pos


def _read_pgm(buf: bytes) -> ImageGrid:
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"not a PGM file (magic {magic!r})", offset=0)
    (w, h, maxval), pos = _pgm_tokens(buf, 2, 3)
    width, height, maxv = w[0], h[0], maxval[0]
    if width < 1 or height < 1:
        raise ParseError(f"invalid dimensions {width}x{height}", offset=w[1])
    if not 0 < maxv <= 65535:
        raise ParseError(f"invalid maxval {maxv}", offset=maxval[1])
    count = width * height
    if magic == b"P2":
        values = []
        for m in _P2_TOKEN.finditer(buf, pos):
            tok = m.group()
            if tok.startswith(b"#"):
                continue
            if not tok.isdigit():
                raise ParseError(f"expected an integer, got {tok[:16]!r}", offset=m.start())
            values.append((int(tok), m.start()))
        if len(values) != count:
            off = values[count][1] if len(values) > count else len(buf)
            raise ParseError(
                f"dimension mismatch: header says {width}x{height} ({count} samples) "
                f"but found {len(values)}", offset=off)
        arr = np.array([v for v, _ in values], dtype=np.float64)
    else:
        # exactly one whitespace byte separates maxval from the raster
        if pos >= len(buf) or not buf[pos:pos + 1].isspace():
            raise ParseError("missing whitespace before raster", offset=pos)
        pos += 1
        itemsize = 1 if maxv < 256 else 2
        nbytes = count * itemsize
        if len(buf) - pos != nbytes:
            raise ParseError(
                f"dimension mismatch: header says {width}x{height} ({nbytes} raster bytes) "
                f"but found {len(buf) - pos}", offset=min(len(buf), pos + nbytes))
        dtype = np.uint8 if itemsize == 1 else ">u2"
        arr = np.frombuffer(buf, dtype=dtype, offset=pos).astype(np.float64)
    if np.any(arr > maxv):
        idx = int(np.flatnonzero(arr > maxv)[0])
        raise ParseError(f"sample {idx} exceeds maxval {maxv}", offset=pos)
    return ImageGrid(arr.reshape(height, width))


def stretch_path(path) -> Path:
    return Path(str(path) + ".stretch")


def _write_pgm(img: ImageGrid, path):
    data = img.data
    lo = float(data.min())
    hi = float(data.max())
    if hi > lo:
        q = np.rint((data - lo) * (PGM_MAXVAL / (hi - lo)))
    else:
        q = np.zeros_like(data)
    q = np.clip(q, 0, PGM_MAXVAL).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n{PGM_MAXVAL}\n".encode("ascii"))
        fh.write(q.tobytes())
    with open(stretch_path(path), "w") as fh:
        fh.write(f"min {lo!r}\nmax {hi!r}\nmaxval {PGM_MAXVAL}\n")


def read_stretch(path) -> tuple[float, float, int]:
    """Return ``(min, max, maxval)`` from a PGM's sidecar stretch file."""
    values = {}
    for line in stretch_path(path).read_text().splitlines():
        if line.strip():
            key, val = line.split()
            values[key] = float(val)
    return values["min"], values["max"], int(values["maxval"])


def load(path, format: str | None = None, unstretch: bool = False) -> ImageGrid:
    """Read an image.

    ``format`` is ``"pgm"`` or ``"f64"``; when omitted it is inferred from
    the extension (``.pgm`` means PGM, anything else f64-raw).  PGM gray
    levels are returned as-is unless ``unstretch`` is set and a sidecar
    stretch file exists, in which case the write-time stretch is inverted.
    """
    fmt = _format_for(path, format)
    buf = Path(path).read_bytes()
    if fmt == "f64":
        return _read_f64(buf)
    img = _read_pgm(buf)
    if unstretch and stretch_path(path).exists():
        lo, hi, maxval = read_stretch(path)
        return ImageGrid(lo + img.data * ((hi - lo) / maxval))
    return img


def save(img, path, format: str | None = None) -> None:
    """Write an image; see the module docstring for the formats."""
    if not isinstance(img, ImageGrid):
        img = ImageGrid(img)
    fmt = _format_for(path, format)
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    if fmt == "f64":
        _write_f64(img, path)
    else:
        _write_pgm(img, path)
