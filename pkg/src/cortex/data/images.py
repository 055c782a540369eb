"""Image decoding, bilinear resizing and normalization."""

from __future__ import annotations

import io

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import IngestionError
from ..tensor import Tensor

IMAGE_SIZE = 200

# 8-bit modes Pillow can turn into RGB without losing precision
_EIGHT_BIT_MODES = {"1", "L", "LA", "P", "PA", "RGB", "RGBA", "RGBX", "CMYK", "YCbCr"}


def decode_image(payload: bytes, source="<bytes>") -> np.ndarray:
    """Decode a PNG or JPEG payload into an ``H x W x 3`` uint8 grid.

    Grayscale sources are replicated across the three channels; alpha is
    dropped.
    """
    try:
        with Image.open(io.BytesIO(payload)) as img:
            if img.format not in ("PNG", "JPEG"):
                raise IngestionError(source, f"unsupported format {img.format}")
            if img.mode not in _EIGHT_BIT_MODES:
                raise IngestionError(source, f"unsupported bit depth (mode {img.mode})")
            img.load()
            if img.mode in ("L", "1"):
                gray = np.asarray(img.convert("L"), dtype=np.uint8)
                return np.repeat(gray[:, :, None], 3, axis=2)
            return np.array(img.convert("RGB"), dtype=np.uint8)
    except IngestionError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise IngestionError(source, f"malformed image: {exc}") from exc


def read_image(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            payload = fh.read()
    except OSError as exc:
        raise IngestionError(path, f"unreadable: {exc.strerror}") from exc
    return decode_image(payload, source=path)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5, clamped to the grid
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(grid: np.ndarray, height: int = IMAGE_SIZE, width: int | None = None) -> np.ndarray:
    """Bilinear resize of an ``H x W`` or ``H x W x C`` grid.

    uint8 input gives uint8 output (round half up); float input stays float64.
    """
    width = height if width is None else width
    src = np.asarray(grid)
    if src.ndim not in (2, 3) or src.shape[0] < 1 or src.shape[1] < 1:
        raise ValueError(f"expected an H x W [x C] grid, got shape {src.shape}")
    if src.shape[:2] == (height, width):
        return src.copy()
    y0, y1, fy = _axis_weights(src.shape[0], height)
    x0, x1, fx = _axis_weights(src.shape[1], width)
    f = src.astype(np.float64)
    if f.ndim == 2:
        f = f[:, :, None]
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = f[y0][:, x0] * (1 - fx) + f[y0][:, x1] * fx
    bottom = f[y1][:, x0] * (1 - fx) + f[y1][:, x1] * fx
    out = top * (1 - fy) + bottom * fy
    if src.ndim == 2:
        out = out[:, :, 0]
    if src.dtype == np.uint8:
        return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return out


def normalize(grid: np.ndarray) -> Tensor:
    """Scale an 8-bit ``H x W x 3`` grid to ``[3, H, W]`` reals in [0, 1]."""
    g = np.asarray(grid)
    if g.ndim == 2:
        g = np.repeat(g[:, :, None], 3, axis=2)
    chw = g.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)
    return Tensor.wrap(np.ascontiguousarray(chw))


def load_image_tensor(path, size: int = IMAGE_SIZE) -> Tensor:
    return normalize(resize_bilinear(read_image(path), size, size))
