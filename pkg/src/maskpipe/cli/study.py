"""Shared state for one CLI run: prepared samples, predictors and cached results.

Everything here is computed lazily and memoized per resolution so that the
``report`` command, which needs every table, does each piece of work once.
"""

from __future__ import annotations

import csv
import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import io
from ..cohort import Manifest, ManifestError, Record, binarize, cohort_stats, load_manifest, load_mask, patient_split
from ..metrics import MetricReport, evaluate_set
from ..optimize import (
    SnapshotSelection,
    SyntheticPredictor,
    ThresholdGrid,
    ThresholdResult,
    all_transforms,
    average_topk,
    ensemble_label,
    image_digest,
    rank_snapshots,
    select_tta,
    threshold_search,
    tta_predict,
    tune_topk,
)
from ..preprocess import SamplePair, ar_target_width, crop_to_lungs, resample_pair
from ..raster import apply_transform, resample_bicubic
from .config import RunConfig
from .errors import ConfigError, DataError

log = logging.getLogger("maskpipe")

SNAPSHOT_SIDECAR = "snapshots.csv"


def resolution_label(width: int, height: int) -> str:
    """Directory/report label, height first (``64x32`` is 64 tall, 32 wide)."""
    return f"{height}x{width}"


def load_base_pair(record: Record, mode: str) -> SamplePair:
    """Native-resolution sample, lung-cropped unless ``mode`` is original."""
    try:
        img = io.read_gray(record.cxr_path)
        tb = load_mask(record.tb_mask_path).astype(np.float64)
    except OSError as exc:
        raise DataError(f"{record.patient_id}: cannot read image: {exc}") from exc
    if tb.shape != img.shape:
        raise DataError(f"{record.patient_id}: TB mask {tb.shape[::-1]} does not match CXR {img.shape[::-1]}")
    pair = SamplePair(img, tb, record.patient_id)
    if mode == "original":
        return pair
    if record.lung_mask_path is None:
        raise DataError(f"{record.patient_id}: mode {mode} needs a lung mask")
    lungs = io.read_gray(record.lung_mask_path)
    if lungs.shape != img.shape:
        # lung masks at another scale are brought onto the CXR grid first
        lungs = resample_bicubic(lungs, img.shape[1], img.shape[0])
    lungs = binarize(lungs)
    if not lungs.any():
        raise DataError(f"{record.patient_id}: lung mask is empty")
    return crop_to_lungs(pair, lungs)


class FilePredictor:
    """Serves precomputed probability maps for known images and their TTA copies.

    The identity copy of patient ``pid`` reads ``<dir>/<pid>.png``; any other
    copy reads ``<dir>/<pid>@<tag>.png`` (e.g. ``P001@shift_0_5.png``).
    """

    def __init__(self, directory: Path, pairs: Sequence[SamplePair]):
        self.directory = Path(directory)
        self._index: dict[bytes, tuple[str, object]] = {}
        for pair in pairs:
            for t in all_transforms():
                copy, _ = apply_transform(pair.image, t)
                self._index.setdefault(image_digest(copy), (pair.record_id, t))

    def path_for(self, pid: str, t) -> Path:
        name = f"{pid}.png" if t.kind == "identity" else f"{pid}@{t.tag}.png"
        return self.directory / name

    def __call__(self, img) -> np.ndarray:
        key = image_digest(np.asarray(img, dtype=np.float64))
        if key not in self._index:
            raise DataError("prediction requested for an image outside the evaluated splits")
        pid, t = self._index[key]
        path = self.path_for(pid, t)
        if not path.is_file():
            raise DataError(f"missing prediction map {path}")
        out = io.read_gray(path)
        if out.shape != np.shape(img):
            raise DataError(f"{path}: map is {out.shape[1]}x{out.shape[0]}, expected {img.shape[1]}x{img.shape[0]}")
        return out


def read_snapshot_sidecar(pred_dir: Path) -> list[tuple[str, Path, str]]:
    """``(snapshot_id, directory, resolution)`` rows; resolution may be empty."""
    sidecar = Path(pred_dir) / SNAPSHOT_SIDECAR
    if not sidecar.is_file():
        raise DataError(f"prediction sidecar not found: {sidecar}")
    rows = []
    with open(sidecar, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"snapshot_id", "path"} <= set(reader.fieldnames):
            raise DataError(f"{sidecar}: header must include snapshot_id,path")
        for line, row in enumerate(reader, start=2):
            sid = (row.get("snapshot_id") or "").strip()
            rel = (row.get("path") or "").strip()
            if not sid or not rel:
                raise DataError(f"{sidecar}:{line}: empty snapshot_id or path")
            if any(sid == r[0] and row.get("resolution", "") == r[2] for r in rows):
                raise DataError(f"{sidecar}:{line}: duplicate snapshot {sid}")
            rows.append((sid, sidecar.parent / rel, (row.get("resolution") or "").strip()))
    if not rows:
        raise DataError(f"{sidecar}: no snapshots listed")
    return rows


@dataclass
class SnapshotEval:
    snapshot_id: str
    tuning: ThresholdResult | None
    threshold: float
    report: MetricReport


class Study:
    def __init__(self, cfg: RunConfig, threads: int = 1):
        self.cfg = cfg
        self.threads = threads
        self.grid = ThresholdGrid(cfg.grid_count)

    # ------------------------------------------------------------------ inputs

    @functools.cached_property
    def manifest(self) -> Manifest:
        if self.cfg.manifest is None:
            raise ConfigError("no manifest given (set manifest in the config or pass --manifest)")
        try:
            return load_manifest(self.cfg.manifest)
        except ManifestError as exc:
            raise DataError(str(exc)) from exc

    @functools.cached_property
    def split_manifest(self) -> Manifest:
        """The manifest's own split, or a seeded split when it has none."""
        m = self.manifest
        if m.split is not None:
            return m
        try:
            return patient_split(m, self.cfg.split_ratios, self.cfg.seed)
        except ValueError as exc:
            raise DataError(str(exc)) from exc

    @functools.cached_property
    def aspect_ratio(self) -> float:
        if self.cfg.aspect_ratio is not None:
            return self.cfg.aspect_ratio
        try:
            dims = self.map(crop_dims, self.manifest.records)
            ar = cohort_stats(self.manifest.records, "lung_cropped", dims=dims).aspect_ratio
        except ValueError as exc:
            raise DataError(f"cannot derive the cohort aspect ratio: {exc}") from exc
        if not 0 < ar <= 1:
            raise DataError(f"cohort aspect ratio {ar:.4f} is outside (0, 1]; set aspect_ratio explicitly")
        return ar

    def map(self, fn: Callable, items: Sequence) -> list:
        """Order-preserving map over ``items`` using the configured thread cap."""
        items = list(items)
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))

    def sizes(self) -> list[tuple[int, int]]:
        """``(width, height)`` per configured ladder entry."""
        if self.cfg.mode == "ar_corrected":
            return [(ar_target_width(h, self.aspect_ratio), h) for h in self.cfg.ladder]
        return [(s, s) for s in self.cfg.ladder]

    def prepare(self, record: Record, sizes: Sequence[tuple[int, int]]) -> list[SamplePair]:
        base = load_base_pair(record, self.cfg.mode)
        tag = "AR-CR" if self.cfg.mode == "ar_corrected" else None
        return [resample_pair(base, w, h, tag) for w, h in sizes]

    # ------------------------------------------------------- per-resolution

    @functools.lru_cache(maxsize=None)
    def level(self, width: int, height: int) -> "Level":
        return Level(self, width, height)

    def levels(self) -> list["Level"]:
        return [self.level(w, h) for w, h in self.sizes()]


def crop_dims(record: Record) -> tuple[int, int]:
    """(width, height) of the lung-cropped CXR."""
    pair = load_base_pair(record, "cropped")
    return pair.size


class Level:
    """All work at one ladder resolution."""

    def __init__(self, study: Study, width: int, height: int):
        self.study = study
        self.cfg = study.cfg
        self.width = width
        self.height = height
        self.label = resolution_label(width, height)

    # ------------------------------------------------------------------ samples

    def _pairs(self, which: str) -> list[SamplePair]:
        records = self.study.split_manifest.subset(which)
        return self.study.map(lambda r: self.study.prepare(r, [(self.width, self.height)])[0], records)

    @functools.cached_property
    def val(self) -> list[SamplePair]:
        return self._pairs("val")

    @functools.cached_property
    def test(self) -> list[SamplePair]:
        pairs = self._pairs(self.cfg.eval_split)
        if not pairs:
            raise DataError(f"split {self.cfg.eval_split!r} is empty")
        return pairs

    @staticmethod
    def gts(pairs: Sequence[SamplePair]) -> list[np.ndarray]:
        return [binarize(p.tb_mask) for p in pairs]

    @functools.cached_property
    def val_gts(self) -> list[np.ndarray]:
        return self.gts(self.val)

    @functools.cached_property
    def test_gts(self) -> list[np.ndarray]:
        return self.gts(self.test)

    # ---------------------------------------------------------------- predictors

    @functools.cached_property
    def predictors(self) -> dict[str, Callable]:
        cfg = self.cfg
        known = self.val + [p for p in self.test if p.record_id not in {v.record_id for v in self.val}]
        if cfg.predictions is not None:
            out = {}
            for sid, directory, res in read_snapshot_sidecar(cfg.predictions):
                if res in ("", self.label):
                    out[sid] = FilePredictor(directory, known)
            if not out:
                raise DataError(f"no snapshot in {cfg.predictions} covers resolution {self.label}")
            return out
        if cfg.synthetic_snapshots > 0:
            pairs = [(p.image, binarize(p.tb_mask).astype(np.float64)) for p in known]
            out = {}
            for i in range(1, cfg.synthetic_snapshots + 1):
                fid = min(1.0, max(0.0, cfg.synthetic_fidelity - (i - 1) * cfg.synthetic_fidelity_step))
                out[f"S{i}"] = SyntheticPredictor(
                    pairs, seed=cfg.seed * 1000 + i, fidelity=fid, blur_sigma=cfg.synthetic_blur
                )
            return out
        raise ConfigError("no predictions: set predictions (a directory with snapshots.csv) or synthetic_snapshots")

    def _plain_maps(self, sid: str, pairs: Sequence[SamplePair]) -> list[np.ndarray]:
        p = self.predictors[sid]
        out = []
        for pair in pairs:
            m = np.asarray(p(pair.image), dtype=np.float64)
            if m.shape != pair.image.shape:
                raise DataError(f"snapshot {sid} returned {m.shape} for {pair.record_id} at {self.label}")
            out.append(m)
        return out

    @functools.cached_property
    def plain_val_maps(self) -> dict[str, list[np.ndarray]]:
        return {sid: self._plain_maps(sid, self.val) for sid in self.predictors}

    @functools.cached_property
    def plain_test_maps(self) -> dict[str, list[np.ndarray]]:
        return {sid: self._plain_maps(sid, self.test) for sid in self.predictors}

    # ---------------------------------------------------------------- results

    def _score(self, maps, threshold: float, label: str) -> MetricReport:
        preds = [binarize(m, threshold) for m in maps]
        return evaluate_set(
            preds,
            self.test_gts,
            label=label,
            threshold=threshold,
            ids=[p.record_id for p in self.test],
            level=self.cfg.confidence,
        )

    @functools.cached_property
    def tuning(self) -> dict[str, ThresholdResult | None]:
        """Validation-optimal threshold per snapshot (None without a val split)."""
        if not self.val:
            log.warning("empty validation split at %s: using the configured threshold", self.label)
            return {sid: None for sid in self.predictors}
        return {sid: threshold_search(self.plain_val_maps[sid], self.val_gts, self.study.grid) for sid in self.predictors}

    @functools.cached_property
    def plain_results(self) -> list[SnapshotEval]:
        out = []
        for sid in self.predictors:
            tr = self.tuning[sid]
            t = tr.threshold if tr is not None else self.cfg.threshold
            out.append(SnapshotEval(sid, tr, t, self._score(self.plain_test_maps[sid], t, sid)))
        return out

    @functools.cached_property
    def selections(self) -> list[SnapshotSelection]:
        if not self.val:
            raise DataError("TTA selection needs a non-empty validation split")
        return select_tta(self.predictors, [p.image for p in self.val], self.val_gts, self.cfg.methods, self.study.grid)

    @functools.cached_property
    def tta_test_maps(self) -> dict[str, list[np.ndarray]]:
        out = {}
        for sel in self.selections:
            p = self.predictors[sel.snapshot_id]
            out[sel.snapshot_id] = [tta_predict(p, pair.image, sel.method) for pair in self.test]
        return out

    @functools.cached_property
    def tta_results(self) -> list[MetricReport]:
        return [
            self._score(self.tta_test_maps[s.snapshot_id], s.threshold, f"{s.snapshot_id}-TTA")
            for s in self.selections
        ]

    @functools.cached_property
    def ranking(self) -> list[str]:
        if self.cfg.rank_by == "plain":
            scores = {r.snapshot_id: (r.tuning.iou if r.tuning else -math.inf) for r in self.plain_results}
            return rank_snapshots(scores)
        return rank_snapshots(self.selections)

    @functools.cached_property
    def ensemble_results(self) -> list[tuple[int, MetricReport]]:
        n = len(self.selections)
        val_maps = {s.snapshot_id: s.val_maps for s in self.selections}
        out = []
        for k in sorted(set(self.cfg.topk)):
            if k > n:
                log.warning("skipping top-%d: only %d snapshots at %s", k, n, self.label)
                continue
            _, tuned = tune_topk(val_maps, self.val_gts, self.ranking, k, self.study.grid)
            test_maps = average_topk(self.tta_test_maps, self.ranking, k)
            out.append((k, self._score(test_maps, tuned.threshold, ensemble_label(self.ranking, k))))
        return out

    def figure_source(self) -> tuple[str, list[np.ndarray], float]:
        """Maps and threshold of the best validation-ranked snapshot with its TTA."""
        best = self.ranking[0]
        sel = next(s for s in self.selections if s.snapshot_id == best)
        return f"{best}-TTA", self.tta_test_maps[best], sel.threshold
