"""PNG input/output for images in [-1, 1] and for depth/segmentation maps.

Depth maps are 16-bit PNGs holding ``round(depth * DEPTH_SCALE)``;
segmentation maps are 16-bit PNGs of integer labels.
"""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .errors import DataError

DEPTH_SCALE = 1000.0


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round((np.clip(image, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)


def from_uint8(image: np.ndarray) -> np.ndarray:
    return (image.astype(np.float32) / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def _write(path, arr) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), arr):
        raise DataError(f"{path}: failed to write image")


def _read(path, flags):
    arr = cv2.imread(str(path), flags)
    if arr is None:
        raise DataError(f"{path}: cannot read image")
    return arr


def write_image(path, image: np.ndarray) -> None:
    u8 = to_uint8(image)
    _write(path, u8[..., ::-1] if u8.ndim == 3 and u8.shape[2] == 3 else u8)


def read_image(path, channels: int = 3) -> np.ndarray:
    if channels == 1:
        return from_uint8(_read(path, cv2.IMREAD_GRAYSCALE))[..., None]
    return from_uint8(_read(path, cv2.IMREAD_COLOR)[..., ::-1].copy())


def write_depth(path, depth: np.ndarray) -> None:
    d = np.round(np.asarray(depth, np.float64) * DEPTH_SCALE)
    if d.min() < 1 or d.max() > 65535:
        raise DataError(f"{path}: depth outside the storable range")
    _write(path, d.astype(np.uint16))


def read_depth(path) -> np.ndarray:
    return _read(path, cv2.IMREAD_UNCHANGED).astype(np.float64) / DEPTH_SCALE


def write_seg(path, seg: np.ndarray) -> None:
    _write(path, np.asarray(seg).astype(np.uint16))


def read_seg(path) -> np.ndarray:
    return _read(path, cv2.IMREAD_UNCHANGED).astype(np.int32)
