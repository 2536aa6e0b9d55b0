"""Raster primitives shared by preprocessing, metrics and TTA.

Images are plain 2D ``numpy`` arrays indexed ``[row, col]`` (height first).
Gray images and probability maps are ``float64`` in ``[0, 1]``; binary and
validity masks are ``bool``. RGB renders are ``(H, W, 3)`` float arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GeomTransform",
    "as_gray",
    "as_mask",
    "resample_bicubic",
    "apply_transform",
    "invert_transform",
    "pad_to",
    "crop",
    "jet_colormap",
    "JET_ANCHORS",
]

# Keys cubic convolution parameter (Catmull-Rom).
KEYS_A = -0.5

JET_ANCHORS = np.array([0.0, 0.125, 0.375, 0.625, 0.875, 1.0])
JET_COLORS = np.array(
    [
        [0.0, 0.0, 0.5],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.5, 0.0, 0.0],
    ]
)

# Slack when deciding whether a rotated sample point lies inside the source.
_EDGE_EPS = 1e-9


def as_gray(img, name: str = "image") -> np.ndarray:
    """Validate and return ``img`` as a float64 gray image in [0, 1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def as_mask(mask, name: str = "mask") -> np.ndarray:
    """Validate and return ``mask`` as a 2D boolean array.

    Accepts bool arrays or numeric arrays holding only 0 and 1.
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2D, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(bool)


# --------------------------------------------------------------------------
# bicubic resampling


def keys_kernel(x, a: float = KEYS_A):
    """Keys cubic convolution kernel evaluated at offsets ``x``."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def _cubic_weights(src_len: int, dst_len: int) -> np.ndarray:
    """Dense ``(dst_len, src_len)`` interpolation matrix along one axis.

    Pixel centres are aligned (``src = (dst + 0.5) * scale - 0.5``) and taps
    falling outside the source are clamped to the nearest edge sample.
    """
    scale = src_len / dst_len
    centers = (np.arange(dst_len) + 0.5) * scale - 0.5
    base = np.floor(centers).astype(np.int64)
    frac = centers - base
    weights = np.zeros((dst_len, src_len))
    rows = np.arange(dst_len)
    for tap in (-1, 0, 1, 2):
        w = keys_kernel(frac - tap)
        idx = np.clip(base + tap, 0, src_len - 1)
        np.add.at(weights, (rows, idx), w)
    return weights


def resample_bicubic(src, target_w: int, target_h: int) -> np.ndarray:
    """Resample a gray image to ``target_w`` x ``target_h`` with Keys bicubic.

    The kernel is not widened when down-sampling, and results are clamped
    to [0, 1]. Resampling to the source size returns an identical copy.
    """
    img = as_gray(src)
    if target_w < 1 or target_h < 1:
        raise ValueError(f"target size must be >= 1, got {target_w}x{target_h}")
    h, w = img.shape
    if (w, h) == (target_w, target_h):
        return img.copy()
    wy = _cubic_weights(h, target_h)
    wx = _cubic_weights(w, target_w)
    out = wy @ img @ wx.T
    return np.clip(out, 0.0, 1.0)


# --------------------------------------------------------------------------
# geometric transforms


@dataclass(frozen=True)
class GeomTransform:
    """An invertible flip, integer shift or rotation.

    ``dx``/``dy`` are integer pixel shifts (positive moves content right /
    down). ``theta`` is in degrees; positive values rotate content
    counter-clockwise as displayed (rows growing downward). ``fill`` is the
    value written where the output samples outside the source.
    """

    kind: str = "identity"
    dx: int = 0
    dy: int = 0
    theta: float = 0.0
    fill: float = 0.0

    KINDS = ("identity", "flip_h", "shift", "rotate")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if int(self.dx) != self.dx or int(self.dy) != self.dy:
            raise ValueError("shift amounts must be integers")

    @classmethod
    def identity(cls) -> "GeomTransform":
        return cls("identity")

    @classmethod
    def flip_h(cls) -> "GeomTransform":
        return cls("flip_h")

    @classmethod
    def shift(cls, dx: int, dy: int, fill: float = 0.0) -> "GeomTransform":
        return cls("shift", dx=int(dx), dy=int(dy), fill=fill)

    @classmethod
    def rotate(cls, theta: float, fill: float = 0.0) -> "GeomTransform":
        return cls("rotate", theta=float(theta), fill=fill)

    def inverse(self) -> "GeomTransform":
        if self.kind == "shift":
            return GeomTransform("shift", dx=-self.dx, dy=-self.dy, fill=self.fill)
        if self.kind == "rotate":
            return GeomTransform("rotate", theta=-self.theta, fill=self.fill)
        return self

    @property
    def tag(self) -> str:
        """Short filesystem-safe label, e.g. ``shift_-5_0`` or ``rot_5``."""
        if self.kind == "shift":
            return f"shift_{self.dx}_{self.dy}"
        if self.kind == "rotate":
            return f"rot_{self.theta:g}"
        if self.kind == "flip_h":
            return "fliph"
        return "orig"


def _shift(img: np.ndarray, dx: int, dy: int, fill) -> np.ndarray:
    h, w = img.shape
    out = np.full_like(img, fill)
    ys, yd = (slice(0, h - dy), slice(dy, h)) if dy >= 0 else (slice(-dy, h), slice(0, h + dy))
    xs, xd = (slice(0, w - dx), slice(dx, w)) if dx >= 0 else (slice(-dx, w), slice(0, w + dx))
    out[yd, xd] = img[ys, xs]
    return out


def _rotation_coords(h: int, w: int, theta: float):
    """Source coordinates sampled by each output pixel of a rotation."""
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rad = math.radians(theta)
    cos_t, sin_t = math.cos(rad), math.sin(rad)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    ox, oy = xx - cx, yy - cy
    # inverse map of a counter-clockwise (on screen) rotation
    sx = cos_t * ox - sin_t * oy + cx
    sy = sin_t * ox + cos_t * oy + cy
    return sx, sy


def _bilinear(img: np.ndarray, sx: np.ndarray, sy: np.ndarray, fill: float):
    h, w = img.shape
    inside = (
        (sx >= -_EDGE_EPS)
        & (sx <= w - 1 + _EDGE_EPS)
        & (sy >= -_EDGE_EPS)
        & (sy <= h - 1 + _EDGE_EPS)
    )
    sx = np.clip(sx, 0.0, w - 1)
    sy = np.clip(sy, 0.0, h - 1)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    # lerp form keeps constant regions exactly constant
    top = img[y0, x0] + (img[y0, x1] - img[y0, x0]) * fx
    bot = img[y1, x0] + (img[y1, x1] - img[y1, x0]) * fx
    val = top + (bot - top) * fy
    return np.where(inside, val, fill), inside


def _check_transform(shape, t: GeomTransform):
    h, w = shape
    if t.kind == "shift" and max(abs(t.dx), abs(t.dy)) >= min(w, h):
        raise ValueError(f"shift ({t.dx}, {t.dy}) too large for {w}x{h} image")
    if t.kind == "rotate" and abs(t.theta) >= 90:
        raise ValueError(f"rotation angle must satisfy |theta| < 90, got {t.theta}")


def apply_transform(src, t: GeomTransform) -> tuple[np.ndarray, np.ndarray]:
    """Apply ``t`` to a gray image.

    Returns the transformed image (same shape) and a boolean validity mask
    that is True where the output pixel was sampled from inside ``src``.
    """
    img = as_gray(src)
    _check_transform(img.shape, t)
    if t.kind == "identity":
        return img.copy(), np.ones(img.shape, dtype=bool)
    if t.kind == "flip_h":
        return img[:, ::-1].copy(), np.ones(img.shape, dtype=bool)
    if t.kind == "shift":
        valid = _shift(np.ones(img.shape, dtype=bool), t.dx, t.dy, False)
        return _shift(img, t.dx, t.dy, t.fill), valid
    sx, sy = _rotation_coords(*img.shape, t.theta)
    out, valid = _bilinear(img, sx, sy, t.fill)
    return out, valid


def invert_transform(pred, validity, t: GeomTransform) -> tuple[np.ndarray, np.ndarray]:
    """Map a prediction made in the transformed frame back to the original.

    The returned validity is True only where the back-mapped pixel came from
    inside the transformed raster *and* from a pixel that was itself valid.
    """
    img = as_gray(pred, "prediction")
    valid = as_mask(validity, "validity")
    if valid.shape != img.shape:
        raise ValueError("prediction and validity shapes differ")
    inv = t.inverse()
    if inv.kind == "rotate":
        _check_transform(img.shape, inv)
        sx, sy = _rotation_coords(*img.shape, inv.theta)
        out, inside = _bilinear(img, sx, sy, inv.fill)
        # a bilinear sample is trusted only if all its taps were valid
        carried, _ = _bilinear(valid.astype(np.float64), sx, sy, 0.0)
        return out, inside & (carried >= 1.0 - _EDGE_EPS)
    out, inside = apply_transform(img, inv)
    carried, _ = apply_transform(valid.astype(np.float64), GeomTransform(inv.kind, inv.dx, inv.dy, inv.theta, 0.0))
    return out, inside & (carried == 1.0)


# --------------------------------------------------------------------------
# padding / cropping


def pad_to(src, target_w: int, target_h: int, fill: float = 0.0) -> np.ndarray:
    """Place ``src`` at the top-left of a ``target_w`` x ``target_h`` canvas."""
    img = np.asarray(src)
    h, w = img.shape
    if target_w < w or target_h < h:
        raise ValueError(f"cannot pad {w}x{h} down to {target_w}x{target_h}")
    out = np.full((target_h, target_w), fill, dtype=img.dtype)
    out[:h, :w] = img
    return out


def crop(src, x0: int, y0: int, w: int, h: int) -> np.ndarray:
    img = np.asarray(src)
    H, W = img.shape
    if x0 < 0 or y0 < 0 or w < 1 or h < 1 or x0 + w > W or y0 + h > H:
        raise ValueError(f"crop box ({x0}, {y0}, {w}, {h}) outside {W}x{H} image")
    return img[y0 : y0 + h, x0 : x0 + w].copy()


# --------------------------------------------------------------------------
# colormap


def jet_segment(values) -> np.ndarray:
    """Index of the jet anchor segment each value falls into (0..4)."""
    v = np.asarray(values, dtype=np.float64)
    return np.clip(np.searchsorted(JET_ANCHORS, v, side="right") - 1, 0, len(JET_ANCHORS) - 2)


def jet_colormap(values) -> np.ndarray:
    """Map values in [0, 1] to RGB using the classic jet anchor table.

    Dark blue at 0, cyan at 0.375, yellow at 0.625, dark red at 1, linear in
    between. Returns an ``(H, W, 3)`` float array (or ``(..., 3)`` for other
    input shapes).
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size and (v.min() < 0.0 or v.max() > 1.0):
        raise ValueError("jet_colormap expects values in [0, 1]")
    return np.stack([np.interp(v, JET_ANCHORS, JET_COLORS[:, c]) for c in range(3)], axis=-1)
