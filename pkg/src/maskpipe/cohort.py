"""Dataset catalog, patient-level splitting and cohort statistics."""

from __future__ import annotations

import csv
import math
import os
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import io
from .raster import as_gray, resample_bicubic

SPLITS = ("train", "val", "test")
CSV_COLUMNS = [
    "patient_id",
    "sex",
    "age",
    "cxr_path",
    "lung_mask_path",
    "tb_mask_path",
    "width",
    "height",
    "split",
]
# masks are nominally {0, 255}; half scale tolerates compression noise
MASK_CUT = 0.5
FLAT_TOL = 1e-12


class ManifestError(ValueError):
    """A manifest file is missing, malformed or violates an invariant."""


@dataclass(frozen=True)
class Record:
    patient_id: str
    sex: str
    age: int | None
    cxr_path: Path
    lung_mask_path: Path | None
    tb_mask_path: Path
    native_width: int
    native_height: int


@dataclass(frozen=True)
class Manifest:
    records: tuple[Record, ...]
    seed: int | None = None
    split: dict[str, str] | None = field(default=None, compare=True)

    def __len__(self) -> int:
        return len(self.records)

    def ids(self, which: str | None = None) -> list[str]:
        """Patient ids in manifest order, optionally restricted to a split."""
        if which is None:
            return [r.patient_id for r in self.records]
        if self.split is None:
            raise ManifestError("manifest has no split assignment")
        return [r.patient_id for r in self.records if self.split[r.patient_id] == which]

    def subset(self, which: str) -> list[Record]:
        wanted = set(self.ids(which))
        return [r for r in self.records if r.patient_id in wanted]

    def by_id(self, patient_id: str) -> Record:
        for r in self.records:
            if r.patient_id == patient_id:
                return r
        raise KeyError(patient_id)


# --------------------------------------------------------------------------
# manifest I/O


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_manifest(path) -> Manifest:
    """Read and validate a manifest CSV.

    Relative file paths resolve against the CSV's directory. Missing
    ``width``/``height`` cells are filled from the CXR header. Any problem
    raises :class:`ManifestError` naming the offending line.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    records: list[Record] = []
    split: dict[str, str] = {}
    seen: dict[str, int] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = set(CSV_COLUMNS) - {"split", "width", "height", "lung_mask_path"}
        missing = required - set(reader.fieldnames or [])
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            where = f"{path}:{line}"
            pid = (row.get("patient_id") or "").strip()
            if not pid:
                raise ManifestError(f"{where}: empty patient_id")
            if pid in seen:
                raise ManifestError(f"{where}: duplicate patient_id {pid!r} (first seen on line {seen[pid]})")
            seen[pid] = line

            sex = (row.get("sex") or "").strip().upper()
            if sex in ("", "U", "UNKNOWN"):
                sex = "unknown"
            elif sex not in ("M", "F"):
                raise ManifestError(f"{where}: sex must be M, F or empty, got {row['sex']!r}")

            age_txt = (row.get("age") or "").strip()
            try:
                age = int(age_txt) if age_txt else None
            except ValueError:
                raise ManifestError(f"{where}: age must be an integer, got {age_txt!r}") from None
            if age is not None and age < 0:
                raise ManifestError(f"{where}: negative age")

            paths = {}
            for col in ("cxr_path", "lung_mask_path", "tb_mask_path"):
                txt = (row.get(col) or "").strip()
                if not txt:
                    if col == "lung_mask_path":
                        paths[col] = None
                        continue
                    raise ManifestError(f"{where}: empty {col}")
                p = _resolve(base, txt)
                if not p.is_file():
                    raise ManifestError(f"{where}: {col} does not exist: {p}")
                paths[col] = p

            w_txt = (row.get("width") or "").strip()
            h_txt = (row.get("height") or "").strip()
            try:
                if w_txt and h_txt:
                    width, height = int(w_txt), int(h_txt)
                else:
                    width, height = io.image_size(paths["cxr_path"])
            except ValueError:
                raise ManifestError(f"{where}: bad width/height") from None
            if width < 1 or height < 1:
                raise ManifestError(f"{where}: width/height must be positive")

            records.append(
                Record(pid, sex, age, paths["cxr_path"], paths["lung_mask_path"], paths["tb_mask_path"], width, height)
            )
            sp = (row.get("split") or "").strip()
            if sp:
                if sp not in SPLITS:
                    raise ManifestError(f"{where}: unknown split {sp!r}")
                split[pid] = sp

    if split and len(split) != len(records):
        raise ManifestError(f"{path}: split column filled for only {len(split)} of {len(records)} rows")
    return Manifest(tuple(records), split=split or None)


def save_manifest(m: Manifest, path, relative_to=None) -> None:
    """Write a manifest CSV; paths are stored relative to ``relative_to`` when possible."""
    path = Path(path)
    base = Path(relative_to) if relative_to is not None else path.parent

    def rel(p):
        if p is None:
            return ""
        return Path(os.path.relpath(Path(p).resolve(), base.resolve())).as_posix()

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in m.records:
            writer.writerow(
                [
                    r.patient_id,
                    "" if r.sex == "unknown" else r.sex,
                    "" if r.age is None else r.age,
                    rel(r.cxr_path),
                    rel(r.lung_mask_path),
                    rel(r.tb_mask_path),
                    r.native_width,
                    r.native_height,
                    m.split[r.patient_id] if m.split else "",
                ]
            )


# --------------------------------------------------------------------------
# binarization


def binarize(img, cut: float = MASK_CUT) -> np.ndarray:
    """Foreground where ``pixel >= cut`` (inclusive)."""
    if not 0.0 <= cut <= 1.0:
        raise ValueError(f"cut must lie in [0, 1], got {cut}")
    return np.asarray(img, dtype=np.float64) >= cut


def load_mask(path, cut: float = MASK_CUT) -> np.ndarray:
    return binarize(io.read_gray(path), cut)


# --------------------------------------------------------------------------
# splitting

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator (Steele, Lea & Flood), 64-bit state.

    ``next()`` advances the state by the golden-gamma increment
    0x9E3779B97F4A7C15 and returns the mixed output. ``below(n)`` draws an
    unbiased integer in ``[0, n)`` by rejection on the top of the 64-bit
    range.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        if n < 1:
            raise ValueError("n must be >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next()
            if v < limit:
                return v % n


def shuffled(items: Sequence, seed: int) -> list:
    """Fisher-Yates shuffle driven by :class:`SplitMix64`.

    Walks ``i`` from ``len - 1`` down to 1 and swaps ``i`` with
    ``j = below(i + 1)``.
    """
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Partition sizes ``round(r_train n), round(r_val n), remainder``."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive fractions, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    if n < 3:
        raise ValueError(f"need at least 3 records to split, got {n}")
    n_train = _round_half_up(ratios[0] * n)
    n_val = _round_half_up(ratios[1] * n)
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"split of {n} records by {tuple(ratios)} leaves an empty partition")
    return n_train, n_val, n_test


def patient_split(m: Manifest, ratios: Sequence[float] = (0.7, 0.1, 0.2), seed: int = 0) -> Manifest:
    """Assign every patient to train/val/test deterministically.

    Ids are sorted, shuffled with :func:`shuffled`, then cut into
    consecutive blocks of the sizes given by :func:`split_sizes`. Sorting
    first makes the result independent of manifest row order.
    """
    ids = sorted(r.patient_id for r in m.records)
    n_train, n_val, _ = split_sizes(len(ids), ratios)
    order = shuffled(ids, seed)
    assignment = {}
    for k, pid in enumerate(order):
        assignment[pid] = "train" if k < n_train else "val" if k < n_train + n_val else "test"
    return replace(m, seed=seed, split=assignment)


# --------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class CohortStats:
    n: int
    mean_width: float
    sd_width: float
    mean_height: float
    sd_height: float
    mean_age_m: float
    sd_age_m: float
    mean_age_f: float
    sd_age_f: float
    n_m: int = 0
    n_f: int = 0
    label: str = ""

    @property
    def aspect_ratio(self) -> float:
        return self.mean_width / self.mean_height


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else math.nan
    return mean, sd


def lung_crop_dims(record: Record) -> tuple[int, int]:
    """(width, height) of the lung bounding box for one record."""
    from .preprocess import lung_bbox

    if record.lung_mask_path is None:
        raise ValueError(f"{record.patient_id}: no lung mask")
    box = lung_bbox(load_mask(record.lung_mask_path))
    return box.w, box.h


def cohort_stats(m: Manifest | Iterable[Record], which: str = "original", dims=None) -> CohortStats:
    """Mean and sample SD of widths, heights and ages by sex.

    ``which`` is ``"original"`` (native dims) or ``"lung_cropped"`` (lung
    bounding-box dims). ``dims`` may supply precomputed ``(w, h)`` pairs
    aligned with the records, which skips reading lung masks.
    """
    records = list(m.records if isinstance(m, Manifest) else m)
    if which not in ("original", "lung_cropped"):
        raise ValueError(f"unknown selection {which!r}")
    if which == "lung_cropped":
        records = [r for r in records if r.lung_mask_path is not None] if dims is None else records
    if not records:
        raise ValueError("empty selection: no records to summarise")
    if dims is None:
        dims = [(r.native_width, r.native_height) for r in records] if which == "original" else [
            lung_crop_dims(r) for r in records
        ]
    widths = [float(w) for w, _ in dims]
    heights = [float(h) for _, h in dims]
    ages_m = [float(r.age) for r in records if r.sex == "M" and r.age is not None]
    ages_f = [float(r.age) for r in records if r.sex == "F" and r.age is not None]
    mw, sw = _mean_sd(widths)
    mh, sh = _mean_sd(heights)
    mam, sam = _mean_sd(ages_m)
    maf, saf = _mean_sd(ages_f)
    return CohortStats(
        n=len(records),
        mean_width=mw,
        sd_width=sw,
        mean_height=mh,
        sd_height=sh,
        mean_age_m=mam,
        sd_age_m=sam,
        mean_age_f=maf,
        sd_age_f=saf,
        n_m=sum(r.sex == "M" for r in records),
        n_f=sum(r.sex == "F" for r in records),
        label=which,
    )


def cohort_heatmap(masks: Sequence, side: int = 256) -> np.ndarray:
    """Average of masks resampled to ``side`` x ``side``, min-max normalised.

    A constant mean field carries no spatial signal and maps to all zeros;
    spreads below ``FLAT_TOL`` count as constant so that resampling
    round-off is not stretched into a pattern.
    """
    if len(masks) == 0:
        raise ValueError("cohort_heatmap needs at least one mask")
    total = np.zeros((side, side))
    for m in masks:
        total += resample_bicubic(as_gray(np.asarray(m, dtype=np.float64)), side, side)
    mean = total / len(masks)
    lo, hi = mean.min(), mean.max()
    if hi - lo <= FLAT_TOL:
        return np.zeros_like(mean)
    return (mean - lo) / (hi - lo)
