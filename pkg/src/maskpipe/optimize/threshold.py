"""Grid search for the segmentation threshold that maximizes pooled IoU."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..raster import as_mask


@dataclass(frozen=True)
class ThresholdGrid:
    count: int = 200

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"threshold grid needs at least 2 points, got {self.count}")

    @property
    def values(self) -> np.ndarray:
        # k / (count - 1) computed per point, so every value is correctly rounded
        return np.arange(self.count, dtype=np.float64) / (self.count - 1)


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    iou: float
    index: int
    curve: np.ndarray

    def __iter__(self):
        # allows ``t, score = threshold_search(...)``
        return iter((self.threshold, self.iou))


def pooled_counts(prob_maps: Sequence, gts: Sequence, grid: ThresholdGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pooled (tp, fp, fn) for every grid threshold, as int64 arrays.

    A pixel with probability ``p`` is foreground at grid index ``k`` iff
    ``values[k] <= p``, i.e. for all ``k`` below
    ``searchsorted(values, p, side="right")``. Counting those cut-off
    indices per class and taking suffix sums yields every threshold's
    confusion in one pass.
    """
    if len(prob_maps) != len(gts):
        raise ValueError(f"{len(prob_maps)} maps but {len(gts)} ground truths")
    if not prob_maps:
        raise ValueError("threshold search needs at least one map")
    values = grid.values
    n = grid.count
    fg_hist = np.zeros(n + 1, dtype=np.int64)
    bg_hist = np.zeros(n + 1, dtype=np.int64)
    for prob, gt in zip(prob_maps, gts):
        p = np.asarray(prob, dtype=np.float64)
        g = as_mask(gt, "ground truth")
        if p.shape != g.shape:
            raise ValueError(f"map {p.shape} and ground truth {g.shape} dims differ")
        cut = np.searchsorted(values, p.ravel(), side="right")
        gflat = g.ravel()
        fg_hist += np.bincount(cut[gflat], minlength=n + 1)
        bg_hist += np.bincount(cut[~gflat], minlength=n + 1)
    # pixels with cut > k are predicted foreground at threshold k
    fg_above = np.cumsum(fg_hist[::-1])[::-1][1:]
    bg_above = np.cumsum(bg_hist[::-1])[::-1][1:]
    tp = fg_above
    fp = bg_above
    fn = fg_hist.sum() - tp
    return tp, fp, fn


def iou_curve(prob_maps: Sequence, gts: Sequence, grid: ThresholdGrid = ThresholdGrid()) -> np.ndarray:
    tp, fp, fn = pooled_counts(prob_maps, gts, grid)
    denom = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        curve = np.where(denom == 0, 1.0, tp / np.maximum(denom, 1))
    return curve


def threshold_search(prob_maps: Sequence, gts: Sequence, grid: ThresholdGrid = ThresholdGrid()) -> ThresholdResult:
    """Threshold on ``grid`` with the highest pooled IoU; ties go to the smallest."""
    curve = iou_curve(prob_maps, gts, grid)
    k = int(np.argmax(curve))
    return ThresholdResult(float(grid.values[k]), float(curve[k]), k, curve)
