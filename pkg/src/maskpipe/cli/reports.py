"""CSV and Markdown tables with fixed 4-decimal formatting."""

from __future__ import annotations

import csv
import io as _io
import math
from typing import Sequence

from ..cohort import CohortStats
from ..metrics import MetricReport
from ..optimize import SnapshotSelection, TtaMethod

METRIC_COLUMNS = [
    "resolution",
    "mode",
    "config",
    "n_images",
    "iou",
    "ci_lower",
    "ci_upper",
    "dice",
    "ssim",
    "sre",
    "sre_inf_count",
    "opt_t",
    "macro_iou",
    "macro_dice",
    "empty_count",
]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.4f}"
    return str(x)


def metric_row(res_label: str, mode: str, r: MetricReport) -> dict:
    return {
        "resolution": res_label,
        "mode": mode,
        "config": r.label,
        "n_images": r.n_images,
        "iou": r.iou,
        "ci_lower": r.ci.lower,
        "ci_upper": r.ci.upper,
        "dice": r.dice,
        "ssim": r.ssim,
        "sre": r.sre,
        "sre_inf_count": r.sre_inf_count,
        "opt_t": r.threshold,
        "macro_iou": r.macro_iou,
        "macro_dice": r.macro_dice,
        "empty_count": r.empty_count,
    }


def per_image_rows(res_label: str, r: MetricReport) -> list[dict]:
    return [
        {
            "resolution": res_label,
            "config": r.label,
            "id": row["id"],
            "tp": row["tp"],
            "fp": row["fp"],
            "fn": row["fn"],
            "iou": row["iou"],
            "dice": row["dice"],
            "ssim": row["ssim"],
            "sre": row["sre"],
        }
        for row in r.per_image
    ]


def selection_rows(res_label: str, sels: Sequence[SnapshotSelection], methods: Sequence[TtaMethod]) -> list[dict]:
    rows = []
    for s in sels:
        row = {
            "resolution": res_label,
            "snapshot": s.snapshot_id,
            "method": s.method.name,
            "combination": s.method.description,
            "opt_t": s.threshold,
            "val_iou": s.iou,
        }
        for m in methods:
            row[f"val_iou_{m.name}"] = s.per_method[m].iou
        rows.append(row)
    return rows


def stats_row(s: CohortStats) -> dict:
    return {
        "selection": s.label,
        "n": s.n,
        "mean_width": s.mean_width,
        "sd_width": s.sd_width,
        "mean_height": s.mean_height,
        "sd_height": s.sd_height,
        "aspect_ratio": s.aspect_ratio,
        "n_male": s.n_m,
        "n_female": s.n_f,
        "mean_age_male": s.mean_age_m,
        "sd_age_male": s.sd_age_m,
        "mean_age_female": s.mean_age_f,
        "sd_age_female": s.sd_age_f,
    }


def to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def to_markdown(rows: Sequence[dict], columns: Sequence[str] | None = None, title: str | None = None) -> str:
    columns = list(columns or (rows[0].keys() if rows else []))
    lines = [f"## {title}", ""] if title else []
    lines.append("| " + " | ".join(columns) + " |")
    lines.append("|" + "|".join("---" for _ in columns) + "|")
    for row in rows:
        lines.append("| " + " | ".join(fmt(row.get(c)) for c in columns) + " |")
    return "\n".join(lines) + "\n"


def metric_markdown(rows: Sequence[dict], title: str, level: float = 0.95) -> str:
    """Compact layout: IoU with its interval in one cell."""
    ci_col = f"IoU ({level * 100:g}% CI)"
    table = [
        {
            "Resolution": r["resolution"],
            "Config": r["config"],
            ci_col: f"{fmt(r['iou'])} ({fmt(r['ci_lower'])},{fmt(r['ci_upper'])})",
            "Dice": r["dice"],
            "SSIM": r["ssim"],
            "SRE": r["sre"],
            "Opt. T": r["opt_t"],
        }
        for r in rows
    ]
    cols = ["Resolution", "Config", ci_col, "Dice", "SSIM", "SRE", "Opt. T"]
    return to_markdown(table, cols, title)
