"""PNG/NPY image I/O with atomic writes."""
from __future__ import annotations

import io
import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .colorimetry import from_uint8


_UMASK = os.umask(0)
os.umask(_UMASK)


class ImageReadError(ValueError):
    pass


def read_rgb8(path) -> np.ndarray:
    """8-bit sRGB image as ``(H, W, 3)`` uint8."""
    try:
        with Image.open(path) as im:
            if im.mode not in ("RGB", "RGBA", "L", "P", "LA"):
                raise ImageReadError(f"{path}: unsupported image mode {im.mode} (need 8-bit)")
            return np.array(im.convert("RGB"))
    except (OSError, Image.DecompressionBombError) as exc:
        raise ImageReadError(f"cannot read image {path}: {exc}") from exc


def read_linear(path) -> np.ndarray:
    """Linear-RGB float image from an 8-bit PNG (sRGB-decoded) or a ``.npy`` array."""
    if Path(path).suffix.lower() == ".npy":
        try:
            arr = np.load(path)
        except (OSError, ValueError) as exc:
            raise ImageReadError(f"cannot read array {path}: {exc}") from exc
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.size == 0:
            raise ImageReadError(f"{path}: expected an (H, W, 3) array, got {arr.shape}")
        return arr.astype(float)
    return from_uint8(read_rgb8(path))


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o666 & ~_UMASK)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr)).save(buf, format="PNG")
    return buf.getvalue()


def write_png(path, arr: np.ndarray) -> None:
    """Write a uint8 RGB (H, W, 3) or grayscale (H, W) array as PNG."""
    arr = np.asarray(arr)
    if arr.dtype != np.uint8:
        raise TypeError(f"write_png needs uint8 data, got {arr.dtype}")
    atomic_write_bytes(path, png_bytes(arr))


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
