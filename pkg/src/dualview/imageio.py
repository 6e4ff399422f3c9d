"""Grayscale image reading and writing: binary PGM (8/16-bit) and PNG."""

from __future__ import annotations

import logging
import re
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

_PGM_HEADER = re.compile(rb"P5\s+(?:#.*?\n\s*)*(\d+)\s+(?:#.*?\n\s*)*(\d+)\s+(?:#.*?\n\s*)*(\d+)\s")


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = _PGM_HEADER.match(raw)
    if m is None:
        raise ValueError(f"{path}: not a binary (P5) portable graymap")
    width, height, maxval = (int(g) for g in m.groups())
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: invalid maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    body = raw[m.end():m.end() + width * height * dtype.itemsize]
    if len(body) != width * height * dtype.itemsize:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(body, dtype=dtype).reshape(height, width).astype(np.float64)


def write_pgm(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.dtype == np.uint8:
        maxval, body = 255, image.tobytes()
    elif image.dtype == np.uint16:
        maxval, body = 65535, image.astype(">u2").tobytes()
    else:
        raise TypeError(f"write_pgm needs uint8 or uint16 pixels, got {image.dtype}")
    h, w = image.shape
    Path(path).write_bytes(b"P5\n%d %d\n%d\n" % (w, h, maxval) + body)


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "I", "I;16", "I;16B", "F"):
            arr = np.asarray(im)
        else:
            log.warning("%s: %s image, using the first channel", path, im.mode)
            arr = np.asarray(im)
            if arr.ndim == 3:
                arr = arr[..., 0]
    return arr.astype(np.float64)


def write_png(path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.dtype == np.uint8:
        Image.fromarray(image, mode="L").save(path, optimize=False)
    elif image.dtype == np.uint16:
        Image.fromarray(image.astype(np.uint16)).save(path)
    else:
        raise TypeError(f"write_png needs uint8 or uint16 pixels, got {image.dtype}")


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_png(path)


def to_uint8(image: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Linear map of [lo, hi] onto [0, 255] with clipping."""
    scaled = (np.asarray(image, dtype=np.float64) - lo) / (hi - lo) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
