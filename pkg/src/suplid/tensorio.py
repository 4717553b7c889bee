"""SLTF binary tensor format plus PPM/PGM image ingestion.

Tensors are plain numpy arrays (row-major, little-endian on disk).
SLTF layout: magic "SLTF", u16 version=1, u8 dtype code, u8 ndim (1-4),
ndim x u32 dims, raw payload with the last axis fastest.
"""

from __future__ import annotations

import io
import struct
from typing import BinaryIO, Union

import numpy as np

MAGIC = b"SLTF"
VERSION = 1

# dtype code <-> little-endian numpy dtype
_CODE_TO_DTYPE = {1: "<f4", 2: "|u1", 3: "<u2", 4: "<i4"}
_KIND_TO_CODE = {
    np.dtype(np.float32): 1,
    np.dtype(np.uint8): 2,
    np.dtype(np.uint16): 3,
    np.dtype(np.int32): 4,
}

MAX_NDIM = 4

PathOrIO = Union[str, "io.IOBase", BinaryIO]


class TensorFormatError(ValueError):
    """Malformed or unsupported SLTF / PPM / PGM content."""


def _validate(arr: np.ndarray) -> None:
    if arr.dtype not in _KIND_TO_CODE:
        raise TensorFormatError(f"unsupported dtype {arr.dtype}; expected one of f32/u8/u16/i32")
    if arr.ndim < 1 or arr.ndim > MAX_NDIM:
        raise TensorFormatError(f"tensor must have 1-{MAX_NDIM} dims, got {arr.ndim}")
    if any(d < 1 for d in arr.shape):
        raise TensorFormatError(f"every dimension must be >= 1, got shape {arr.shape}")


def write_tensor(arr: np.ndarray, dest: PathOrIO) -> int:
    """Serialize *arr* to SLTF. Returns the number of bytes written."""
    _validate(arr)
    arr = np.ascontiguousarray(arr)
    header = MAGIC + struct.pack(
        "<HBB", VERSION, _KIND_TO_CODE[arr.dtype], arr.ndim
    ) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
    if isinstance(dest, str):
        with open(dest, "wb") as f:
            f.write(header)
            f.write(payload)
    else:
        dest.write(header)
        dest.write(payload)
    return len(header) + len(payload)


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TensorFormatError(f"truncated stream while reading {what}: wanted {n} bytes, got {len(buf)}")
    return buf


def read_tensor(src: PathOrIO) -> np.ndarray:
    """Parse an SLTF stream back into a numpy array (bit-exact round trip)."""
    if isinstance(src, str):
        with open(src, "rb") as f:
            return read_tensor(f)
    if isinstance(src, (bytes, bytearray)):
        return read_tensor(io.BytesIO(src))
    magic = _read_exact(src, 4, "magic")
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, code, ndim = struct.unpack("<HBB", _read_exact(src, 4, "header"))
    if version != VERSION:
        raise TensorFormatError(f"unsupported SLTF version {version}")
    if code not in _CODE_TO_DTYPE:
        raise TensorFormatError(f"unsupported dtype code {code}")
    if ndim < 1 or ndim > MAX_NDIM:
        raise TensorFormatError(f"ndim {ndim} outside 1-{MAX_NDIM}")
    shape = struct.unpack(f"<{ndim}I", _read_exact(src, 4 * ndim, "dims"))
    if any(d < 1 for d in shape):
        raise TensorFormatError(f"zero-sized dimension in shape {shape}")
    dtype = np.dtype(_CODE_TO_DTYPE[code])
    count = 1
    for d in shape:
        count *= d
    payload = _read_exact(src, count * dtype.itemsize, "payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    # native byte order in memory, little-endian is the disk convention
    return arr.astype(dtype.newbyteorder("="), copy=True).reshape(shape)


def _next_token(f: BinaryIO) -> bytes:
    """Next whitespace-separated header token, skipping '#' comments."""
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            if tok:
                return tok
            raise TensorFormatError("truncated netpbm header")
        if c == b"#":
            while c and c != b"\n":
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def _read_netpbm(src: PathOrIO, magic: bytes, channels: int) -> np.ndarray:
    if isinstance(src, str):
        with open(src, "rb") as f:
            return _read_netpbm(f, magic, channels)
    if isinstance(src, (bytes, bytearray)):
        return _read_netpbm(io.BytesIO(src), magic, channels)
    got = _next_token(src)
    if got != magic:
        raise TensorFormatError(f"unsupported netpbm magic {got!r}, expected {magic!r}")
    width = int(_next_token(src))
    height = int(_next_token(src))
    maxval = int(_next_token(src))
    if maxval != 255:
        raise TensorFormatError(f"only maxval 255 supported, got {maxval}")
    if width < 1 or height < 1:
        raise TensorFormatError(f"bad image size {width}x{height}")
    n = width * height * channels
    payload = _read_exact(src, n, "pixel data")
    arr = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return arr.reshape(shape).copy()


def read_ppm(src: PathOrIO) -> np.ndarray:
    """Binary P6 PPM -> u8 tensor [H, W, 3]."""
    return _read_netpbm(src, b"P6", 3)


def read_pgm(src: PathOrIO) -> np.ndarray:
    """Binary P5 PGM -> u8 tensor [H, W] (used for masks)."""
    return _read_netpbm(src, b"P5", 1)


def write_ppm(img: np.ndarray, dest: PathOrIO) -> int:
    """u8 [H, W, 3] -> binary P6 PPM."""
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise TensorFormatError(f"write_ppm wants u8 [H,W,3], got {img.dtype} {img.shape}")
    header = b"P6\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    payload = np.ascontiguousarray(img).tobytes()
    if isinstance(dest, str):
        with open(dest, "wb") as f:
            f.write(header)
            f.write(payload)
    else:
        dest.write(header)
        dest.write(payload)
    return len(header) + len(payload)


def write_pgm(img: np.ndarray, dest: PathOrIO) -> int:
    """u8 [H, W] -> binary P5 PGM."""
    if img.dtype != np.uint8 or img.ndim != 2:
        raise TensorFormatError(f"write_pgm wants u8 [H,W], got {img.dtype} {img.shape}")
    header = b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0])
    payload = np.ascontiguousarray(img).tobytes()
    if isinstance(dest, str):
        with open(dest, "wb") as f:
            f.write(header)
            f.write(payload)
    else:
        dest.write(header)
        dest.write(payload)
    return len(header) + len(payload)
