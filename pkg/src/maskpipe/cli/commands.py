"""Command implementations.

Each command writes into a private staging directory under the output
directory. Files are moved into place only after the command succeeds, so a
failed run leaves previous outputs untouched.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
from collections import Counter
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__, io
from ..cohort import binarize, cohort_heatmap, cohort_stats, load_mask, patient_split, save_manifest
from ..figures import contour_overlay, heatmap_rgb, quality_map_rgb
from ..metrics import ssim
from .config import RunConfig
from .errors import DataError
from .reports import (
    METRIC_COLUMNS,
    metric_markdown,
    metric_row,
    per_image_rows,
    selection_rows,
    stats_row,
    to_csv,
    to_markdown,
)
from .study import Level, Study, crop_dims, resolution_label

log = logging.getLogger("maskpipe")

PROVENANCE_DIR = "provenance"
AGE_BIN = 10


class Workspace:
    """Staging area whose contents are promoted into ``out`` on success."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out))
        self.files: list[str] = []

    def path(self, rel: str) -> Path:
        p = self.staging / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.files:
            self.files.append(rel)
        return p

    def write_text(self, rel: str, text: str) -> None:
        self.path(rel).write_text(text, encoding="utf-8", newline="")

    def digest(self, rel: str) -> str:
        return hashlib.sha256((self.staging / rel).read_bytes()).hexdigest()

    def promote(self) -> None:
        for rel in sorted(self.files):
            dest = self.out / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(self.staging / rel, dest)
        shutil.rmtree(self.staging, ignore_errors=True)

    def discard(self) -> None:
        shutil.rmtree(self.staging, ignore_errors=True)


def _write_table(ws: Workspace, cfg: RunConfig, stem: str, rows, columns=None, title=None, metric=False) -> None:
    if "csv" in cfg.report_formats:
        ws.write_text(f"{stem}.csv", to_csv(rows, columns))
    if "markdown" in cfg.report_formats:
        if metric:
            md = metric_markdown(rows, title or stem, cfg.confidence)
        else:
            md = to_markdown(rows, columns, title or stem)
        ws.write_text(f"{stem}.md", md)


# ---------------------------------------------------------------- commands


def cmd_prep(study: Study, ws: Workspace, opts: dict) -> None:
    cfg = study.cfg
    sizes = study.sizes()
    mode_dir = cfg.mode

    def one(record):
        pairs = study.prepare(record, sizes)
        for pair, (w, h) in zip(pairs, sizes):
            d = f"{mode_dir}/{resolution_label(w, h)}"
            io.write_gray8(ws.path(f"{d}/{record.patient_id}_img.png"), pair.image)
            io.write_mask8(ws.path(f"{d}/{record.patient_id}_msk.png"), binarize(pair.tb_mask))
        return record.patient_id

    # register paths up front so the staging file list is in a fixed order
    for record in study.manifest.records:
        for w, h in sizes:
            d = f"{mode_dir}/{resolution_label(w, h)}"
            ws.path(f"{d}/{record.patient_id}_img.png")
            ws.path(f"{d}/{record.patient_id}_msk.png")
    study.map(one, study.manifest.records)
    rows = [
        {"resolution": resolution_label(w, h), "width": w, "height": h, "n_records": len(study.manifest)}
        for w, h in sizes
    ]
    if cfg.mode == "ar_corrected":
        for r in rows:
            r["aspect_ratio"] = study.aspect_ratio
    _write_table(ws, cfg, f"{mode_dir}/ladder", rows, title=f"{cfg.mode} ladder")


def cmd_split(study: Study, ws: Workspace, opts: dict) -> None:
    cfg = study.cfg
    try:
        m = patient_split(study.manifest, cfg.split_ratios, cfg.seed)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if opts.get("in_place"):
        target = Path(cfg.manifest)
        tmp = target.with_name(f".{target.name}.tmp")
        save_manifest(m, tmp, relative_to=target.parent)
        os.replace(tmp, target)
    else:
        save_manifest(m, ws.path("manifest.csv"), relative_to=cfg.out)
    counts = Counter(m.split.values())
    rows = [{"split": s, "n": counts.get(s, 0)} for s in ("train", "val", "test")]
    _write_table(ws, cfg, "split_counts", rows, title="split sizes")


def cmd_stats(study: Study, ws: Workspace, opts: dict) -> None:
    cfg = study.cfg
    m = study.manifest
    rows = [stats_row(cohort_stats(m, "original"))]
    with_lungs = [r for r in m.records if r.lung_mask_path is not None]
    if with_lungs:
        dims = study.map(crop_dims, with_lungs)
        rows.append(stats_row(cohort_stats(with_lungs, "lung_cropped", dims=dims)))
    _write_table(ws, cfg, "cohort_stats", rows, title="cohort statistics")

    sex = Counter(r.sex for r in m.records)
    _write_table(ws, cfg, "sex_counts", [{"sex": k, "n": sex[k]} for k in sorted(sex)], title="sex")
    ages = Counter(int(r.age // AGE_BIN) * AGE_BIN for r in m.records if r.age is not None)
    age_rows = [{"age_from": a, "age_to": a + AGE_BIN - 1, "n": ages[a]} for a in sorted(ages)]
    unknown = sum(r.age is None for r in m.records)
    if unknown:
        age_rows.append({"age_from": "unknown", "age_to": "", "n": unknown})
    _write_table(ws, cfg, "age_histogram", age_rows, ["age_from", "age_to", "n"], title="age distribution")


def _heatmap(study: Study, ws: Workspace) -> None:
    cfg = study.cfg
    masks = study.map(lambda r: load_mask(r.tb_mask_path), study.manifest.records)
    heat = cohort_heatmap(masks, cfg.heatmap_side)
    io.write_rgb8(ws.path("figures/cohort_heatmap.png"), heatmap_rgb(heat))
    io.write_prob16(ws.path("figures/cohort_heatmap16.png"), heat)


def cmd_heatmap(study: Study, ws: Workspace, opts: dict) -> None:
    _heatmap(study, ws)


def _eval_tables(study: Study, ws: Workspace) -> list[dict]:
    rows, per_image = [], []
    for lv in study.levels():
        for r in lv.plain_results:
            rows.append(metric_row(lv.label, study.cfg.mode, r.report))
            per_image += per_image_rows(lv.label, r.report)
    _write_table(ws, study.cfg, "reports/eval", rows, METRIC_COLUMNS, "evaluation", metric=True)
    if per_image:
        _write_table(ws, study.cfg, "reports/eval_per_image", per_image, title="per-image metrics")
    return rows


def cmd_eval(study: Study, ws: Workspace, opts: dict) -> None:
    _eval_tables(study, ws)


def cmd_tune(study: Study, ws: Workspace, opts: dict) -> None:
    rows = []
    for lv in study.levels():
        for sid, tr in lv.tuning.items():
            rows.append(
                {
                    "resolution": lv.label,
                    "snapshot": sid,
                    "opt_t": tr.threshold if tr is not None else study.cfg.threshold,
                    "val_iou": tr.iou if tr is not None else None,
                    "grid_index": tr.index if tr is not None else None,
                }
            )
    _write_table(ws, study.cfg, "reports/thresholds", rows, title="validation-optimal thresholds")


def _tta_tables(study: Study, ws: Workspace) -> list[dict]:
    sel_rows, rows = [], []
    for lv in study.levels():
        sel_rows += selection_rows(lv.label, lv.selections, study.cfg.methods)
        rows += [metric_row(lv.label, study.cfg.mode, r) for r in lv.tta_results]
    _write_table(ws, study.cfg, "reports/tta_selection", sel_rows, title="TTA selection per snapshot")
    _write_table(ws, study.cfg, "reports/tta_eval", rows, METRIC_COLUMNS, "snapshots with TTA", metric=True)
    return rows


def cmd_tta(study: Study, ws: Workspace, opts: dict) -> None:
    _tta_tables(study, ws)


def _ensemble_tables(study: Study, ws: Workspace) -> list[dict]:
    rows, rank_rows = [], []
    for lv in study.levels():
        rank_rows += [{"resolution": lv.label, "rank": i + 1, "snapshot": s} for i, s in enumerate(lv.ranking)]
        for k, r in lv.ensemble_results:
            row = metric_row(lv.label, study.cfg.mode, r)
            row["k"] = k
            rows.append(row)
    _write_table(ws, study.cfg, "reports/ranking", rank_rows, title=f"snapshot ranking ({study.cfg.rank_by})")
    _write_table(ws, study.cfg, "reports/ensemble", rows, METRIC_COLUMNS + ["k"], "top-K averaging", metric=True)
    return rows


def cmd_ensemble(study: Study, ws: Workspace, opts: dict) -> None:
    _ensemble_tables(study, ws)


def _figures(study: Study, ws: Workspace, lv: Level) -> None:
    label, maps, t = lv.figure_source()
    for pair, gt, prob in list(zip(lv.test, lv.test_gts, maps))[: study.cfg.figure_limit]:
        pred = binarize(prob, t)
        q = ssim(gt.astype(np.float64), pred.astype(np.float64)).quality_map
        base = f"figures/{lv.label}/{label}"
        io.write_rgb8(ws.path(f"{base}/quality/{pair.record_id}.png"), quality_map_rgb(q, side=256))
        io.write_rgb8(ws.path(f"{base}/contours/{pair.record_id}.png"), contour_overlay(pair.image, gt, pred))


def cmd_report(study: Study, ws: Workspace, opts: dict) -> None:
    cmd_stats(study, ws, opts)
    rows = _eval_tables(study, ws)
    cmd_tune(study, ws, opts)
    rows += _tta_tables(study, ws)
    rows += _ensemble_tables(study, ws)
    _write_table(ws, study.cfg, "reports/summary", rows, METRIC_COLUMNS, "summary", metric=True)
    _heatmap(study, ws)
    for lv in study.levels():
        _figures(study, ws, lv)


COMMANDS: dict[str, Callable[[Study, Workspace, dict], None]] = {
    "prep": cmd_prep,
    "split": cmd_split,
    "stats": cmd_stats,
    "heatmap": cmd_heatmap,
    "eval": cmd_eval,
    "tune": cmd_tune,
    "tta": cmd_tta,
    "ensemble": cmd_ensemble,
    "report": cmd_report,
}


def run_command(command: str, cfg: RunConfig, threads: int = 1, opts: dict | None = None) -> Path:
    """Run ``command`` and promote its outputs; returns the provenance path."""
    opts = dict(opts or {})
    study = Study(cfg, threads)
    ws = Workspace(cfg.out)
    try:
        COMMANDS[command](study, ws, opts)
        prov_rel = f"{PROVENANCE_DIR}/{command}.json"
        record = {
            "tool": "maskpipe",
            "version": __version__,
            "command": command,
            "options": opts,
            "config": cfg.to_dict(),
            "inputs": _input_digests(cfg),
            "outputs": {rel: ws.digest(rel) for rel in sorted(ws.files)},
        }
        ws.write_text(prov_rel, json.dumps(record, indent=2, sort_keys=True) + "\n")
        ws.promote()
    except BaseException:
        ws.discard()
        raise
    return cfg.out / prov_rel


def _input_digests(cfg: RunConfig) -> dict[str, str]:
    out = {}
    if cfg.manifest is not None and Path(cfg.manifest).is_file():
        out["manifest"] = hashlib.sha256(Path(cfg.manifest).read_bytes()).hexdigest()
    return out
