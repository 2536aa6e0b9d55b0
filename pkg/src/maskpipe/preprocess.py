"""Lung-ROI cropping, resolution ladders and aspect-ratio correction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .raster import as_gray, as_mask, crop, resample_bicubic

MODES = ("original", "cropped", "ar_corrected")
DEFAULT_RESOLUTIONS = tuple((s, s) for s in (32, 64, 128, 256, 512, 768, 1024))
DEFAULT_AR_HEIGHTS = (64, 128, 256, 512, 768, 1024)
UNET_STRIDE = 32


@dataclass(frozen=True)
class BBox:
    x0: int
    y0: int
    w: int
    h: int

    def contained_in(self, width: int, height: int) -> bool:
        return self.x0 >= 0 and self.y0 >= 0 and self.x0 + self.w <= width and self.y0 + self.h <= height


@dataclass(frozen=True)
class SamplePair:
    """An image and its TB mask, kept at identical dimensions.

    The mask is held as intensities so that it can be resampled alongside
    the image; binarize it only at the end of a pipeline.
    """

    image: np.ndarray
    tb_mask: np.ndarray
    record_id: str = ""
    tags: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if np.shape(self.image) != np.shape(self.tb_mask):
            raise ValueError(
                f"{self.record_id}: image {np.shape(self.image)} and mask {np.shape(self.tb_mask)} dims differ"
            )

    @property
    def size(self) -> tuple[int, int]:
        """(width, height)."""
        h, w = np.shape(self.image)
        return w, h

    def tagged(self, image, tb_mask, tag: str) -> "SamplePair":
        return SamplePair(image, tb_mask, self.record_id, self.tags + (tag,))


@dataclass(frozen=True)
class LadderSpec:
    resolutions: tuple[tuple[int, int], ...] = DEFAULT_RESOLUTIONS
    mode: str = "original"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown ladder mode {self.mode!r}")
        if not self.resolutions:
            raise ValueError("ladder needs at least one resolution")
        for w, h in self.resolutions:
            if w < 1 or h < 1:
                raise ValueError(f"bad resolution {w}x{h}")
            if self.mode == "ar_corrected" and (w < 32 or h < 32 or w % 32 or h % 32):
                raise ValueError(f"AR-corrected resolution {w}x{h} must be multiples of 32")


def lung_bbox(lung_mask) -> BBox:
    """Tightest box around all foreground pixels of a lung mask."""
    mask = as_mask(lung_mask, "lung mask")
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise ValueError("lung mask has no foreground pixels")
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


def crop_to_lungs(pair: SamplePair, lung_mask) -> SamplePair:
    mask = as_mask(lung_mask, "lung mask")
    if mask.shape != np.shape(pair.image):
        raise ValueError(f"{pair.record_id}: lung mask {mask.shape} does not match image {np.shape(pair.image)}")
    box = lung_bbox(mask)
    return pair.tagged(
        crop(pair.image, box.x0, box.y0, box.w, box.h),
        crop(pair.tb_mask, box.x0, box.y0, box.w, box.h),
        "CR",
    )


def resample_pair(pair: SamplePair, width: int, height: int, tag: str | None = None) -> SamplePair:
    img = resample_bicubic(as_gray(pair.image), width, height)
    msk = resample_bicubic(as_gray(pair.tb_mask, "tb mask"), width, height)
    return pair.tagged(img, msk, tag or f"{height}x{width}")


def build_ladder(pair: SamplePair, spec: LadderSpec) -> list[SamplePair]:
    """One bicubic-resampled copy of ``pair`` per ladder resolution."""
    return [resample_pair(pair, w, h) for w, h in spec.resolutions]


def ar_target_width(height: int, ar: float) -> int:
    """Largest multiple of 32 not above ``height * ar`` (at least 32)."""
    if height % UNET_STRIDE:
        raise ValueError(f"height {height} is not divisible by {UNET_STRIDE}")
    if not 0.0 < ar <= 1.0:
        raise ValueError(f"aspect ratio must lie in (0, 1], got {ar}")
    # the 1e-9 absorbs round-off when height * ar is an exact multiple
    blocks = math.floor(height * ar / UNET_STRIDE + 1e-9)
    return max(UNET_STRIDE, UNET_STRIDE * blocks)


def ar_ladder(heights: Sequence[int] = DEFAULT_AR_HEIGHTS, ar: float = 0.965) -> LadderSpec:
    return LadderSpec(tuple((ar_target_width(h, ar), h) for h in heights), mode="ar_corrected")


def ar_correct(pair: SamplePair, height: int, ar: float) -> SamplePair:
    """Anisotropic resample to ``height`` x ``ar_target_width(height, ar)``."""
    width = ar_target_width(height, ar)
    return resample_pair(pair, width, height, tag="AR-CR")
