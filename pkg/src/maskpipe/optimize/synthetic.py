"""Deterministic stand-in for a trained segmentation model.

The predictor knows a fixed set of (image, ground truth) fixtures. When
called on a fixture, or on any TTA copy of one, it returns the equally
transformed, optionally blurred ground truth mixed with seeded uniform
noise: ``fidelity * blur(gt) + (1 - fidelity) * noise``.
"""

from __future__ import annotations

import hashlib
from typing import Mapping, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from ..raster import GeomTransform, apply_transform, as_gray
from .tta import all_transforms


def image_digest(img: np.ndarray) -> bytes:
    """Content key for a float raster (pixels plus shape)."""
    h = hashlib.sha1(np.ascontiguousarray(img, dtype=np.float64).tobytes())
    h.update(repr(img.shape).encode())
    return h.digest()


class SyntheticPredictor:
    """Fixture-backed predictor.

    ``fidelity`` may be overridden per transform tag (``"orig"``,
    ``"fliph"``, ``"shift_0_5"``, ``"rot_-5"``...) via
    ``fidelity_by_tag``; this lets tests make some augmentations more
    useful than others.
    """

    def __init__(
        self,
        pairs: Sequence[tuple],
        seed: int = 0,
        fidelity: float = 1.0,
        blur_sigma: float = 0.0,
        fidelity_by_tag: Mapping[str, float] | None = None,
        transforms: Sequence[GeomTransform] | None = None,
    ):
        if not 0.0 <= fidelity <= 1.0:
            raise ValueError(f"fidelity must lie in [0, 1], got {fidelity}")
        self.seed = int(seed)
        self.fidelity = float(fidelity)
        self.blur_sigma = float(blur_sigma)
        self.fidelity_by_tag = dict(fidelity_by_tag or {})
        self.transforms = list(transforms) if transforms is not None else all_transforms()
        self._gts = []
        self._index: dict[bytes, tuple[int, int]] = {}
        for i, (img, gt) in enumerate(pairs):
            img = as_gray(img)
            gt = as_gray(np.asarray(gt, dtype=np.float64), "ground truth")
            if img.shape != gt.shape:
                raise ValueError(f"fixture {i}: image and ground truth dims differ")
            self._gts.append(gt)
            for k, t in enumerate(self.transforms):
                copy, _ = apply_transform(img, t)
                self._index.setdefault(image_digest(copy), (i, k))

    def _clean(self, i: int) -> np.ndarray:
        gt = self._gts[i]
        if self.blur_sigma > 0:
            return np.clip(gaussian_filter(gt, self.blur_sigma, mode="nearest"), 0.0, 1.0)
        return gt

    def __call__(self, img) -> np.ndarray:
        img = as_gray(img)
        try:
            i, k = self._index[image_digest(img)]
        except KeyError:
            raise KeyError("image has no paired ground-truth fixture") from None
        t = self.transforms[k]
        fid = self.fidelity_by_tag.get(t.tag, self.fidelity)
        clean, _ = apply_transform(self._clean(i), t)
        if fid == 1.0:
            return clean
        noise = np.random.default_rng([self.seed, i, k]).random(img.shape)
        return np.clip(fid * clean + (1.0 - fid) * noise, 0.0, 1.0)


def synthetic_predictor(pairs, seed: int = 0, fidelity: float = 1.0, **kwargs) -> SyntheticPredictor:
    return SyntheticPredictor(pairs, seed=seed, fidelity=fidelity, **kwargs)
