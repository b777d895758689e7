"""
Array Container Reader

Parser for version 1.0 array containers (the ".npy" layout):

    offset 0   magic      b"\\x93NUMPY"
    offset 6   version    major 1, minor 0
    offset 8   header_len uint16 little-endian
    offset 10  header     Python dict literal, newline terminated
    offset 10+header_len  raw row-major payload

Only little-endian float32/float64 payloads in C order are accepted.
"""

import ast
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from core.errors import ArrayFormatError, BadMagicError, TruncatedPayloadError, UnsupportedDtypeError


MAGIC = b"\x93NUMPY"
VERSION = (1, 0)
PREAMBLE_SIZE = len(MAGIC) + 2 + 2
SUPPORTED_DTYPES = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}
HEADER_KEYS = {"descr", "fortran_order", "shape"}


def _parse_header(text: str) -> dict:
    try:
        header = ast.literal_eval(text)
    except (SyntaxError, ValueError, TypeError, MemoryError, RecursionError) as e:
        raise ArrayFormatError(f"unparsable array header: {e}")
    if not isinstance(header, dict) or set(header) != HEADER_KEYS:
        raise ArrayFormatError(f"array header must contain exactly {sorted(HEADER_KEYS)}")
    return header


def _parse_shape(shape) -> Tuple[int, ...]:
    if not isinstance(shape, tuple) or not all(
        isinstance(extent, int) and not isinstance(extent, bool) and extent >= 0 for extent in shape
    ):
        raise ArrayFormatError(f"invalid shape {shape!r} in array header")
    return shape


def parse_array_container(data: bytes) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """
    Parse an in-memory container.

    Args:
        data: Whole file contents

    Returns:
        (flat values in row-major order, shape)
    """
    for offset, expected in enumerate(MAGIC):
        if offset >= len(data):
            raise TruncatedPayloadError(f"file ends inside the magic string at offset {offset}")
        if data[offset] != expected:
            raise BadMagicError(
                f"bad magic byte 0x{data[offset]:02x} at offset {offset} (expected 0x{expected:02x})",
                offset,
            )
    if len(data) < PREAMBLE_SIZE:
        raise TruncatedPayloadError("file ends inside the container preamble")

    version = (data[6], data[7])
    if version != VERSION:
        raise ArrayFormatError(f"unsupported container version {version[0]}.{version[1]} at offset 6")

    (header_len,) = struct.unpack_from("<H", data, 8)
    header_end = PREAMBLE_SIZE + header_len
    if header_end > len(data):
        raise TruncatedPayloadError(f"header of {header_len} bytes runs past the end of the file")
    try:
        text = data[PREAMBLE_SIZE:header_end].decode("latin1")
    except UnicodeDecodeError as e:
        raise ArrayFormatError(f"undecodable array header: {e}")
    if not text.endswith("\n"):
        raise ArrayFormatError("array header is not newline terminated")

    header = _parse_header(text)
    descr = header["descr"]
    if not isinstance(descr, str) or descr not in SUPPORTED_DTYPES:
        raise UnsupportedDtypeError(f"unsupported dtype {descr!r} (only '<f4' and '<f8')")
    if header["fortran_order"] is not False:
        raise ArrayFormatError("column-major (fortran_order) payloads are not supported")
    shape = _parse_shape(header["shape"])

    dtype = SUPPORTED_DTYPES[descr]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    payload = data[header_end:]
    if len(payload) != count * dtype.itemsize:
        raise TruncatedPayloadError(
            f"shape {shape} needs {count * dtype.itemsize} payload bytes, found {len(payload)}"
        )
    values = np.frombuffer(payload, dtype=dtype, count=count).astype(dtype.newbyteorder("="))
    return values, shape


def read_array_container(path: Union[str, Path]) -> Tuple[np.ndarray, Tuple[int, ...]]:
    """Read a container file; see parse_array_container."""
    return parse_array_container(Path(path).read_bytes())


def load_array(path: Union[str, Path]) -> np.ndarray:
    """Read a container file and reshape to its declared shape."""
    values, shape = read_array_container(path)
    return values.reshape(shape)
