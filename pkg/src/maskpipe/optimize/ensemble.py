"""Per-snapshot TTA selection, snapshot ranking and top-K snapshot averaging."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .threshold import ThresholdGrid, ThresholdResult, threshold_search
from .tta import ALL_METHODS, Predictor, TtaMethod, method_transforms, predict_copies, tta_aggregate


@dataclass
class SnapshotSelection:
    """Best TTA method and threshold found for one snapshot on validation data."""

    snapshot_id: str
    method: TtaMethod
    threshold: float
    iou: float
    per_method: dict[TtaMethod, ThresholdResult] = field(default_factory=dict, repr=False)
    val_maps: list[np.ndarray] = field(default_factory=list, repr=False)


def _aggregate_all(p: Predictor, imgs: Sequence, methods: Sequence[TtaMethod]) -> dict[TtaMethod, list[np.ndarray]]:
    """TTA-aggregated maps per method, predicting each distinct copy once."""
    needed = []
    for m in methods:
        for t in method_transforms(m):
            if t not in needed:
                needed.append(t)
    out: dict[TtaMethod, list[np.ndarray]] = {m: [] for m in methods}
    for img in imgs:
        cache = {t: e for t, e in zip(needed, predict_copies(p, img, needed))}
        for m in methods:
            out[m].append(tta_aggregate([cache[t] for t in method_transforms(m)]))
    return out


def select_tta(
    predictors: Mapping[str, Predictor],
    val_imgs: Sequence,
    val_gts: Sequence,
    methods: Sequence[TtaMethod] = ALL_METHODS,
    grid: ThresholdGrid = ThresholdGrid(),
) -> list[SnapshotSelection]:
    """Pick the TTA method and threshold maximizing validation IoU per snapshot.

    Every method's aggregated maps get their own threshold search. Ties go
    to the lower method index, then the lower threshold.
    """
    if len(val_imgs) == 0:
        raise ValueError("select_tta needs a non-empty validation set")
    methods = sorted(methods, key=lambda m: m.index)
    selections = []
    for sid, p in predictors.items():
        maps = _aggregate_all(p, val_imgs, methods)
        results = {m: threshold_search(maps[m], val_gts, grid) for m in methods}
        best = methods[0]
        for m in methods[1:]:
            if results[m].iou > results[best].iou:
                best = m
        r = results[best]
        selections.append(SnapshotSelection(sid, best, r.threshold, r.iou, results, maps[best]))
    return selections


def rank_snapshots(scores: Mapping[str, float] | Sequence[SnapshotSelection]) -> list[str]:
    """Snapshot ids by descending validation IoU; ties keep input order."""
    if isinstance(scores, Mapping):
        items = list(scores.items())
    else:
        items = [(s.snapshot_id, s.iou) for s in scores]
    order = sorted(range(len(items)), key=lambda i: (-items[i][1], i))
    return [items[i][0] for i in order]


def average_topk(maps_by_snapshot: Mapping[str, Sequence], ranking: Sequence[str], k: int) -> list[np.ndarray]:
    """Per-image pixel mean of the maps of the ``k`` best-ranked snapshots.

    Members are summed in ranking order, then divided by ``k``.
    """
    if not 1 <= k <= len(ranking):
        raise ValueError(f"k must lie in [1, {len(ranking)}], got {k}")
    members = list(ranking[:k])
    n_images = {len(maps_by_snapshot[s]) for s in members}
    if len(n_images) != 1:
        raise ValueError("snapshots disagree on the number of images")
    out = []
    for i in range(n_images.pop()):
        acc = np.array(maps_by_snapshot[members[0]][i], dtype=np.float64)
        for s in members[1:]:
            acc = acc + np.asarray(maps_by_snapshot[s][i], dtype=np.float64)
        out.append(acc / k if k > 1 else acc)
    return out


def tune_topk(
    val_maps_by_snapshot: Mapping[str, Sequence],
    val_gts: Sequence,
    ranking: Sequence[str],
    k: int,
    grid: ThresholdGrid = ThresholdGrid(),
) -> tuple[list[np.ndarray], ThresholdResult]:
    """Average the top-``k`` validation maps and re-optimize the threshold."""
    maps = average_topk(val_maps_by_snapshot, ranking, k)
    return maps, threshold_search(maps, val_gts, grid)


def ensemble_label(ranking: Sequence[str], k: int, suffix: str = "-TTA") -> str:
    return ",".join(ranking[:k]) + suffix
