"""Seeded synthetic cohort on disk, for demos and end-to-end tests."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .. import io

SAMPLE_CONFIG = """\
manifest = "manifest.csv"
out = "out"
mode = "original"
resolutions = [{side}]
synthetic_snapshots = 4
synthetic_fidelity = 0.9
synthetic_fidelity_step = 0.1
synthetic_blur = 1.0
topk = [2, 3]
seed = 0
"""


def _ellipse(h, w, cy, cx, ry, rx):
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def synthetic_case(rng: np.random.Generator, side: int):
    """One (cxr, lungs, tb) triple; width is narrowed a little so cohorts are portrait."""
    h = side
    w = side - int(rng.integers(0, max(1, side // 10)))
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.zeros((h, w))
    for _ in range(3):
        fx, fy, ph = rng.uniform(0.5, 3.0, 2).tolist() + [rng.uniform(0, 2 * np.pi)]
        img += np.sin(2 * np.pi * (fx * xx + fy * yy) + ph)
    img = (img - img.min()) / (img.max() - img.min())
    img = np.clip(0.15 + 0.6 * img + rng.normal(0, 0.05, img.shape), 0, 1)

    cy = h * rng.uniform(0.45, 0.55)
    ry = h * rng.uniform(0.36, 0.42)
    rx = w * rng.uniform(0.12, 0.16)
    left = _ellipse(h, w, cy, w * 0.3, ry, rx)
    right = _ellipse(h, w, cy, w * 0.7, ry, rx)
    lungs = left | right

    side_cx = w * (0.3 if rng.random() < 0.5 else 0.7)
    tb = _ellipse(
        h,
        w,
        cy + ry * rng.uniform(-0.5, 0.5),
        side_cx + rx * rng.uniform(-0.4, 0.4),
        ry * rng.uniform(0.15, 0.35),
        rx * rng.uniform(0.25, 0.5),
    )
    tb &= lungs
    img = np.where(tb, np.clip(img + 0.2, 0, 1), img)
    return img, lungs, tb


def write_synthetic_cohort(out_dir, count: int = 20, side: int = 256, seed: int = 0) -> Path:
    """Write ``count`` cases plus ``manifest.csv`` and a sample config; returns the manifest path."""
    if count < 3:
        raise ValueError("need at least 3 cases for a train/val/test split")
    if side < 32:
        raise ValueError("side must be at least 32")
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        pid = f"P{i + 1:03d}"
        img, lungs, tb = synthetic_case(rng, side)
        io.write_gray8(out / "cxr" / f"{pid}.png", img)
        io.write_mask8(out / "lungs" / f"{pid}.png", lungs)
        io.write_mask8(out / "tb" / f"{pid}.png", tb)
        sex = "M" if rng.random() < 0.6 else "F"
        age = int(rng.integers(18, 80))
        rows.append([pid, sex, age, f"cxr/{pid}.png", f"lungs/{pid}.png", f"tb/{pid}.png", "", "", ""])
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "sex", "age", "cxr_path", "lung_mask_path", "tb_mask_path", "width", "height", "split"])
        w.writerows(rows)
    (out / "maskpipe.toml").write_text(SAMPLE_CONFIG.format(side=side), encoding="utf-8")
    return manifest
