"""
AXTN Tensor File Tool

Bit-exact binary tensor format used for volumes, slice caches and checkpoints:

    magic   41 58 54 4E ("AXTN")
    version 0x01
    dtype   0x01 = f32, 0x02 = f64
    ndim    one byte
    extents ndim × u32 little-endian
    payload row-major little-endian scalars
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from utils.errors import DataError
from utils.logger import setup_logger

logger = setup_logger(__name__)

MAGIC = b"AXTN"
VERSION = 0x01
DTYPE_CODES = {np.dtype(np.float32): 0x01, np.dtype(np.float64): 0x02}
CODE_DTYPES = {0x01: np.dtype("<f4"), 0x02: np.dtype("<f8")}


def encode_tensor(array: np.ndarray) -> bytes:
    """
    Serialize an array to AXTN bytes.

    Integer and boolean arrays are stored as f32 (label volumes, masks).

    Args:
        array: Array to encode

    Returns:
        Encoded bytes
    """
    array = np.asarray(array)
    if array.dtype not in DTYPE_CODES:
        array = array.astype(np.float32)
    if array.ndim > 255:
        raise DataError(f"AXTN supports at most 255 dimensions, got {array.ndim}")
    code = DTYPE_CODES[array.dtype]
    header = MAGIC + bytes([VERSION, code, array.ndim])
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype=CODE_DTYPES[code]).tobytes(order="C")
    return header + payload


def decode_tensor(blob: bytes) -> np.ndarray:
    """
    Parse AXTN bytes.

    Args:
        blob: Encoded bytes

    Returns:
        Array with native byte order

    Raises:
        DataError: On bad magic, version, dtype code or truncated payload
    """
    if len(blob) < 7 or blob[:4] != MAGIC:
        raise DataError("not an AXTN tensor (bad magic)")
    version, code, ndim = blob[4], blob[5], blob[6]
    if version != VERSION:
        raise DataError(f"unsupported AXTN version {version}")
    if code not in CODE_DTYPES:
        raise DataError(f"unknown AXTN dtype code 0x{code:02x}")
    offset = 7 + 4 * ndim
    if len(blob) < offset:
        raise DataError("truncated AXTN header")
    shape = struct.unpack(f"<{ndim}I", blob[7:offset])
    dtype = CODE_DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise DataError(f"AXTN payload is {len(blob) - offset} bytes, expected {expected} for shape {shape}")
    array = np.frombuffer(blob, dtype=dtype, offset=offset).reshape(shape)
    return array.astype(dtype.newbyteorder("="), copy=True)


def write_tensor(path: Union[str, Path], array: np.ndarray) -> Path:
    """Write an array to `path` in AXTN format, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))
    logger.debug(f"Wrote {path} shape={tuple(np.shape(array))}")
    return path


def read_tensor(path: Union[str, Path]) -> np.ndarray:
    """Read an AXTN file."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"tensor file not found: {path}")
    try:
        return decode_tensor(path.read_bytes())
    except DataError as e:
        logger.error(f"Failed to decode {path}: {e}")
        raise DataError(f"{path}: {e}") from e
