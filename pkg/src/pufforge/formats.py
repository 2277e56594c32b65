"""Byte-level codecs for on-disk blocks.

Three kinds of raw block are used (documented byte-exactly in
docs/formats.md):

* image blocks: 16-byte header (magic ``PFIM``, record count, height,
  width) followed by count*height*width little-endian float32 values in
  C order;
* bit blocks: same 16-byte header layout with magic ``PFBT``, followed
  by records of ceil(height*width / 8) bytes, each record the row-major
  bits packed 8 per byte, least significant bit first;
* float64 blocks: headerless little-endian float64 values in C order;
  the shape lives in the accompanying JSON header file.

Challenge files reuse the packed-bit row layout without a binary header
(their geometry lives in the dataset manifest).
"""

from __future__ import annotations

import struct

import numpy as np

_HEADER = struct.Struct("<4sIHH4x")  # magic, count, height, width, padding
MAGIC_IMAGES = b"PFIM"
MAGIC_BITS = b"PFBT"
HEADER_SIZE = _HEADER.size  # 16


def _check_dims(count: int, height: int, width: int) -> None:
    if not 0 <= count < 2**32:
        raise ValueError(f"record count {count} out of range")
    if not (0 < height < 2**16 and 0 < width < 2**16):
        raise ValueError(f"dimensions {height}x{width} out of range")


def write_image_block(path, images: np.ndarray) -> None:
    arr = np.ascontiguousarray(images, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"expected (count, height, width), got shape {arr.shape}")
    count, height, width = arr.shape
    _check_dims(count, height, width)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC_IMAGES, count, height, width))
        fh.write(arr.tobytes())


def read_image_block(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise ValueError(f"{path}: truncated header")
    magic, count, height, width = _HEADER.unpack_from(raw)
    if magic != MAGIC_IMAGES:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC_IMAGES!r}")
    expected = count * height * width * 4
    body = raw[HEADER_SIZE:]
    if len(body) != expected:
        raise ValueError(f"{path}: body is {len(body)} bytes, expected {expected}")
    return np.frombuffer(body, dtype="<f4").reshape(count, height, width).copy()


def pack_bit_rows(bits: np.ndarray) -> bytes:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 2:
        raise ValueError(f"expected (count, length) bits, got shape {arr.shape}")
    return np.packbits(arr, axis=1, bitorder="little").tobytes()


def unpack_bit_rows(buf: bytes, row_bits: int, count: int) -> np.ndarray:
    stride = (row_bits + 7) // 8
    if len(buf) != stride * count:
        raise ValueError(f"bit buffer is {len(buf)} bytes, expected {stride * count}")
    packed = np.frombuffer(buf, dtype=np.uint8).reshape(count, stride)
    return np.unpackbits(packed, axis=1, bitorder="little")[:, :row_bits]


def write_bit_block(path, bits: np.ndarray, height: int, width: int) -> None:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 2 or arr.shape[1] != height * width:
        raise ValueError(f"expected (count, {height * width}) bits, got shape {arr.shape}")
    _check_dims(arr.shape[0], height, width)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC_BITS, arr.shape[0], height, width))
        fh.write(pack_bit_rows(arr))


def read_bit_block(path) -> tuple[np.ndarray, int, int]:
    """Returns (bits as (count, height*width) uint8, height, width)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise ValueError(f"{path}: truncated header")
    magic, count, height, width = _HEADER.unpack_from(raw)
    if magic != MAGIC_BITS:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {MAGIC_BITS!r}")
    bits = unpack_bit_rows(raw[HEADER_SIZE:], height * width, count)
    return bits, height, width


def write_f64_block(path, values: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def read_f64_block(path, shape) -> np.ndarray:
    expected = int(np.prod(shape)) * 8
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) != expected:
        raise ValueError(f"{path}: block is {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
