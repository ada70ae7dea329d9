"""Raster files: 8/16-bit PNG and the ``BSF1`` float container.

``BSF1`` layout: the 4 magic bytes ``b"BSF1"``, then little-endian ``u32``
width, height and channel count, then ``channels * height * width``
little-endian ``float32`` values in planar order (all of channel 0 in
row-major order, then channel 1, ...).
"""

from __future__ import annotations

import struct
from pathlib import Path

import cv2
import numpy as np

from .errors import ParameterError

MAGIC = b"BSF1"
_HEADER = struct.Struct("<4sIII")


def write_bsf(path, raster) -> None:
    raster = np.asarray(raster)
    if raster.ndim == 2:
        raster = raster[..., None]
    if raster.ndim != 3:
        raise ParameterError(f"cannot store array of shape {raster.shape} as a raster")
    h, w, c = raster.shape
    planar = np.ascontiguousarray(np.moveaxis(raster, 2, 0), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, w, h, c))
        fh.write(planar.tobytes())


def read_bsf(path) -> np.ndarray:
    """Return ``(H, W)`` float32 for one channel, ``(H, W, C)`` otherwise."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != MAGIC:
        raise ParameterError(f"{path}: not a BSF1 file")
    _, w, h, c = _HEADER.unpack_from(data)
    expected = _HEADER.size + 4 * w * h * c
    if len(data) != expected:
        raise ParameterError(f"{path}: expected {expected} bytes for {w}x{h}x{c}, found {len(data)}")
    planar = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(c, h, w)
    raster = np.moveaxis(planar, 0, 2).astype(np.float32)
    return raster[..., 0] if c == 1 else raster


def read_png(path) -> np.ndarray:
    """Read an 8- or 16-bit PNG as float32 in its native value range, RGB order."""
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise ParameterError(f"{path}: cannot read image")
    if image.ndim == 3:
        code = cv2.COLOR_BGRA2RGBA if image.shape[2] == 4 else cv2.COLOR_BGR2RGB
        image = cv2.cvtColor(image, code)
    return image.astype(np.float32)


def write_png(path, raster, bits: int = 8) -> None:
    if bits not in (8, 16):
        raise ParameterError("PNG bit depth must be 8 or 16")
    dtype = np.uint8 if bits == 8 else np.uint16
    top = 255 if bits == 8 else 65535
    image = np.clip(np.rint(np.asarray(raster, dtype=np.float64)), 0, top).astype(dtype)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[..., 0]
    if image.ndim == 3:
        code = cv2.COLOR_RGBA2BGRA if image.shape[2] == 4 else cv2.COLOR_RGB2BGR
        image = cv2.cvtColor(image, code)
    if not cv2.imwrite(str(path), image):
        raise ParameterError(f"{path}: cannot write image")


def read_raster(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ParameterError(f"{path}: no such file")
    if path.suffix.lower() == ".png":
        return read_png(path)
    return read_bsf(path)


def write_raster(path, raster, bits: int = 16) -> None:
    """PNG (``bits`` deep) for ``.png`` paths, BSF1 for anything else."""
    if Path(path).suffix.lower() == ".png":
        write_png(path, raster, bits)
    else:
        write_bsf(path, raster)
