"""Test-time augmentation: expansion, prediction and aggregation."""

from __future__ import annotations

import enum
from typing import Callable, Sequence

import numpy as np

from ..raster import GeomTransform, apply_transform, as_gray, invert_transform

Predictor = Callable[[np.ndarray], np.ndarray]

SHIFT_PX = 5
ROTATE_DEG = 5.0

PART_LABELS = {
    "original": "Original",
    "flip_h": "horizontal flipping",
    "width_shift": "width shifting",
    "height_shift": "height shifting",
    "rotation": "rotation",
}


class TtaMethod(enum.Enum):
    """The eight augmentation combinations, each always including the original."""

    M1 = ("original", "flip_h")
    M2 = ("original", "width_shift")
    M3 = ("original", "height_shift")
    M4 = ("original", "width_shift", "height_shift")
    M5 = ("original", "flip_h", "width_shift", "height_shift")
    M6 = ("original", "rotation")
    M7 = ("original", "width_shift", "height_shift", "rotation")
    M8 = ("original", "flip_h", "width_shift", "height_shift", "rotation")

    @property
    def parts(self) -> tuple[str, ...]:
        return self.value

    @property
    def index(self) -> int:
        return int(self.name[1:])

    @property
    def description(self) -> str:
        return " + ".join(PART_LABELS[p] for p in self.parts)

    @classmethod
    def parse(cls, name: str) -> "TtaMethod":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown TTA method {name!r}") from None


ALL_METHODS = tuple(TtaMethod)


def method_transforms(method: TtaMethod) -> list[GeomTransform]:
    """Transforms for ``method``: the original, one flip, and a -5/+5 pair per
    shift or rotation part, in a fixed order."""
    out = [GeomTransform.identity()]
    parts = method.parts
    if "flip_h" in parts:
        out.append(GeomTransform.flip_h())
    if "width_shift" in parts:
        out += [GeomTransform.shift(-SHIFT_PX, 0), GeomTransform.shift(SHIFT_PX, 0)]
    if "height_shift" in parts:
        out += [GeomTransform.shift(0, -SHIFT_PX), GeomTransform.shift(0, SHIFT_PX)]
    if "rotation" in parts:
        out += [GeomTransform.rotate(-ROTATE_DEG), GeomTransform.rotate(ROTATE_DEG)]
    return out


def all_transforms() -> list[GeomTransform]:
    """Every distinct transform used by any method (those of M8)."""
    return method_transforms(TtaMethod.M8)


def tta_expand(img, method: TtaMethod) -> list[tuple[GeomTransform, np.ndarray, np.ndarray]]:
    img = as_gray(img)
    if min(img.shape) <= SHIFT_PX:
        raise ValueError(f"image {img.shape[1]}x{img.shape[0]} too small for +/-{SHIFT_PX} px shifts")
    return [(t, *apply_transform(img, t)) for t in method_transforms(method)]


def tta_aggregate(entries: Sequence[tuple[GeomTransform, np.ndarray, np.ndarray]]) -> np.ndarray:
    """Average predictions back in the original frame.

    Each ``(transform, prediction, validity)`` entry is inverse-transformed;
    pixels are averaged over the copies in which they are valid. A pixel
    valid in no copy takes the identity copy's value (or the first entry's
    when no identity copy is present).
    """
    if not entries:
        raise ValueError("tta_aggregate needs at least one prediction")
    shape = np.shape(entries[0][1])
    backs = []
    ref = None
    for t, pred, valid in entries:
        if np.shape(pred) != shape:
            raise ValueError("all TTA predictions must share one shape")
        back, back_valid = invert_transform(pred, valid, t)
        backs.append((back, back_valid))
        if ref is None or (t.kind == "identity" and ref[0] != "identity"):
            ref = (t.kind, back)
    base = ref[1]
    # averaging offsets from the reference keeps identical copies exact
    num = np.zeros(shape)
    den = np.zeros(shape)
    for back, back_valid in backs:
        num += np.where(back_valid, back - base, 0.0)
        den += back_valid
    out = base + num / np.maximum(den, 1.0)
    return np.clip(out, 0.0, 1.0)


def _predict(p: Predictor, img: np.ndarray, index: int) -> np.ndarray:
    try:
        out = p(img)
    except Exception as exc:
        raise RuntimeError(f"predictor failed on TTA copy {index}: {exc}") from exc
    out = np.asarray(out, dtype=np.float64)
    if out.shape != img.shape:
        raise ValueError(f"predictor returned shape {out.shape} for TTA copy {index} of shape {img.shape}")
    return out


def predict_copies(p: Predictor, img, transforms: Sequence[GeomTransform]) -> list[tuple]:
    """Run ``p`` on each transformed copy; returns aggregate-ready entries."""
    img = as_gray(img)
    entries = []
    for i, t in enumerate(transforms):
        copy, valid = apply_transform(img, t)
        entries.append((t, _predict(p, copy, i), valid))
    return entries


def tta_predict(p: Predictor, img, method: TtaMethod) -> np.ndarray:
    """Expand, predict each copy, map back and average."""
    entries = [(t, _predict(p, copy, i), valid) for i, (t, copy, valid) in enumerate(tta_expand(img, method))]
    return tta_aggregate(entries)
