"""Figure rasters: contour overlays, SSIM quality maps and cohort heatmaps."""

from __future__ import annotations

import numpy as np

from .raster import as_gray, as_mask, jet_colormap, resample_bicubic

GT_COLOR = (1.0, 0.0, 0.0)
PRED_COLOR = (0.0, 0.0, 1.0)
DISPLAY_SIDE = 256


def boundary(mask) -> np.ndarray:
    """Foreground pixels with a 4-neighbour in the background.

    Pixels outside the raster count as background, so foreground touching
    the border is part of the boundary.
    """
    m = as_mask(mask)
    padded = np.pad(m, 1, constant_values=False)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return m & ~interior


def rescale_rgb(rgb: np.ndarray, side: int = DISPLAY_SIDE) -> np.ndarray:
    h, w, _ = rgb.shape
    if (h, w) == (side, side):
        return rgb
    return np.stack([resample_bicubic(rgb[..., c], side, side) for c in range(3)], axis=-1)


def contour_overlay(image, gt, pred, side: int | None = DISPLAY_SIDE) -> np.ndarray:
    """Gray image with ground-truth (red) and prediction (blue) boundaries.

    Boundaries are found at the evaluation resolution; only the rendered
    overlay is rescaled to ``side`` x ``side`` for display.
    """
    img = as_gray(image)
    for name, m in (("ground truth", gt), ("prediction", pred)):
        if np.shape(m) != img.shape:
            raise ValueError(f"{name} dims {np.shape(m)} differ from image dims {img.shape}")
    rgb = np.repeat(img[..., None], 3, axis=-1)
    rgb[boundary(gt)] = GT_COLOR
    rgb[boundary(pred)] = PRED_COLOR
    return rescale_rgb(rgb, side) if side else rgb


def quality_map_rgb(quality_map, side: int | None = None) -> np.ndarray:
    """Jet rendering of an SSIM quality map (clamped to [0, 1] first)."""
    rgb = jet_colormap(np.clip(np.asarray(quality_map, dtype=np.float64), 0.0, 1.0))
    return rescale_rgb(rgb, side) if side else rgb


def heatmap_rgb(heatmap) -> np.ndarray:
    return jet_colormap(as_gray(heatmap, "heatmap"))
