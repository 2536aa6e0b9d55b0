"""PNG reading and writing in the toolkit's canonical intensity scale."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

_SIXTEEN_BIT_MODES = {"I;16", "I;16B", "I;16L", "I;16N", "I"}


def read_gray(path) -> np.ndarray:
    """Load a grayscale PNG as float64 in [0, 1].

    8-bit data is divided by 255 and 16-bit data by 65535. Color files are
    converted to luminance first.
    """
    with Image.open(path) as im:
        if im.mode in _SIXTEEN_BIT_MODES:
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        else:
            if im.mode != "L":
                im = im.convert("L")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    return np.clip(arr, 0.0, 1.0)


def image_size(path) -> tuple[int, int]:
    """(width, height) from the image header, without decoding pixels."""
    with Image.open(path) as im:
        return im.size


def _prepare(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_gray8(path, img) -> None:
    arr = np.rint(np.clip(np.asarray(img, dtype=np.float64), 0, 1) * 255).astype(np.uint8)
    Image.fromarray(arr).save(_prepare(path), optimize=False)


def write_mask8(path, mask) -> None:
    """Write a binary mask as an 8-bit {0, 255} PNG."""
    arr = np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)
    Image.fromarray(arr).save(_prepare(path), optimize=False)


def write_prob16(path, prob) -> None:
    """Write a probability map as 16-bit PNG, value = round(p * 65535)."""
    arr = np.rint(np.clip(np.asarray(prob, dtype=np.float64), 0, 1) * 65535).astype(np.uint16)
    Image.fromarray(arr).save(_prepare(path), optimize=False)


def write_rgb8(path, rgb) -> None:
    arr = np.rint(np.clip(np.asarray(rgb, dtype=np.float64), 0, 1) * 255).astype(np.uint8)
    Image.fromarray(arr).save(_prepare(path), optimize=False)


def quantize16(prob) -> np.ndarray:
    """Round-trip a map through the 16-bit interchange quantization."""
    return np.rint(np.clip(np.asarray(prob, dtype=np.float64), 0, 1) * 65535) / 65535.0
