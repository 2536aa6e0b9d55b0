"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line.

Run standalone with ``python3 tests/test_acceptance.py`` for just the
summary lines, or through pytest where the lines appear inline.
"""

import contextlib
import csv
import io
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import smooth_image  # noqa: E402
from oracles import brute_force_best, naive_ssim  # noqa: E402

from maskpipe.cli.config import load_config  # noqa: E402
from maskpipe.cli.fixtures import write_synthetic_cohort  # noqa: E402
from maskpipe.cli.main import main  # noqa: E402
from maskpipe.cli.study import Study  # noqa: E402
from maskpipe.cohort import Manifest, Record, patient_split, split_sizes  # noqa: E402
from maskpipe.metrics import clopper_pearson, sre, ssim  # noqa: E402
from maskpipe.optimize import (  # noqa: E402
    ALL_METHODS,
    LrSchedule,
    ThresholdGrid,
    TtaMethod,
    average_topk,
    cyclic_lr,
    tta_expand,
    tta_predict,
    threshold_search,
)
from maskpipe.preprocess import ar_target_width  # noqa: E402
from maskpipe.raster import GeomTransform, apply_transform, invert_transform  # noqa: E402

REPORTED_OPT_T = [
    0.9548, 0.6332, 0.3719, 0.1005, 0.2663, 0.0704, 0.9900,
    0.9950, 0.9799, 0.9950, 0.9899, 0.9899, 0.9796, 0.9950,
]  # fmt: skip


def _verdict(number: int, title: str, checks: dict[str, bool], elapsed: float, budget: float | None) -> str:
    failed = [k for k, ok in checks.items() if not ok]
    if budget is not None and elapsed > budget:
        failed.append(f"runtime {elapsed:.1f}s > {budget:g}s")
    status = "PASS" if not failed else "FAIL"
    extra = f" ({'; '.join(failed)})" if failed else ""
    return f"[{status}] criterion {number:2d}: {title} [{elapsed:.2f}s]{extra}"


def _report(number, title, checks, elapsed, budget=None):
    line = _verdict(number, title, checks, elapsed, budget)
    print(line, file=sys.__stdout__, flush=True)
    assert line.startswith("[PASS]"), line


def _records(n):
    return tuple(Record(f"R{i:03d}", "M", 40, None, None, None, 100, 100) for i in range(n))


def _run_cli(*args):
    with contextlib.redirect_stdout(io.StringIO()):
        code = main([str(a) for a in args])
    if code != 0:
        raise AssertionError(f"maskpipe {' '.join(map(str, args))} exited {code}")


# --------------------------------------------------------------------------


def check_aspect_ratio_rule():
    expected = {64: 32, 128: 96, 256: 224, 512: 480, 768: 736, 1024: 960}
    return {f"h={h}": ar_target_width(h, 0.965) == w for h, w in expected.items()}


def check_split_sizes():
    m = Manifest(_records(287))
    a = patient_split(m, (0.7, 0.1, 0.2), seed=17)
    b = patient_split(m, (0.7, 0.1, 0.2), seed=17)
    counts = tuple(len(a.ids(s)) for s in ("train", "val", "test"))
    return {
        "sizes (201,29,57)": split_sizes(287, (0.7, 0.1, 0.2)) == (201, 29, 57) and counts == (201, 29, 57),
        "same seed, same split": a.split == b.split,
    }


def check_clopper_pearson():
    ci = clopper_pearson(0.4859, 57, 0.95)
    n = 57
    zero = clopper_pearson(0.0, n)
    full = clopper_pearson(1.0, n)
    return {
        "lower within 0.01": abs(ci.lower - 0.3561) <= 0.01,
        "upper within 0.01": abs(ci.upper - 0.6157) <= 0.01,
        "k=0 closed form": zero.lower == 0.0 and abs(zero.upper - (1 - 0.025 ** (1 / n))) <= 1e-9,
        "k=n closed form": full.upper == 1.0 and abs(full.lower - 0.025 ** (1 / n)) <= 1e-9,
    }


def check_ssim_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        a, b = rng.random((2, 32, 32))
        ref, _ = naive_ssim(a, b)
        worst = max(worst, abs(ssim(a, b).score - ref))
    a = rng.random((32, 32))
    const = ssim(np.zeros((32, 32)), np.ones((32, 32))).score
    return {
        f"100 pairs within 1e-9 (worst {worst:.1e})": worst <= 1e-9,
        "ssim(a, a) == 1": ssim(a, a).score == 1.0,
        "constant pair ~9.999e-5": abs(const - 0.01**2 / (1 + 0.01**2)) <= 1e-9 and abs(const - 9.999e-5) <= 1e-8,
    }


def check_sre():
    gt = np.full((8, 8), 0.5)
    checker = np.where(np.indices((8, 8)).sum(0) % 2, 1.0, -1.0)
    return {
        "0 dB": abs(sre(gt, gt + 0.5 * checker)) <= 1e-9,
        "20 dB": abs(sre(gt, gt + 0.05 * checker) - 20.0) <= 1e-9,
        "+inf on zero error": sre(gt, gt) == math.inf,
    }


def check_threshold_search():
    rng = np.random.default_rng(6)
    optimal = True
    for seed in range(5):
        gts = [rng.random((24, 24)) > 0.7 for _ in range(3)]
        maps = [np.clip(0.4 * g + 0.8 * rng.random(g.shape), 0, 1) for g in gts]
        best, _ = brute_force_best(maps, gts)
        optimal &= threshold_search(maps, gts).iou == best
    vals = ThresholdGrid(200).values
    gts = [rng.random((24, 24)) > 0.6 for _ in range(3)]
    scaled = threshold_search([0.6 * g for g in gts], gts)
    on_grid = all(abs(t - round(t * 199) / 199) <= 1 / 398 for t in REPORTED_OPT_T)
    return {
        "no better grid threshold": optimal,
        "grid is k/199": all(vals[k] == k / 199 for k in range(200)),
        "0.6*gt gives 1/199 with IoU 1": scaled.threshold == 1 / 199 and scaled.iou == 1.0,
        "reported thresholds on grid": on_grid,
    }


def check_tta_geometry():
    img = smooth_image((40, 44), seed=8)
    exact = True
    for t in [GeomTransform.flip_h(), GeomTransform.shift(5, 0), GeomTransform.shift(-5, 0),
              GeomTransform.shift(0, 5), GeomTransform.shift(0, -5), GeomTransform.shift(3, -2)]:  # fmt: skip
        back, valid = invert_transform(*apply_transform(img, t), t)
        exact &= bool(np.array_equal(back[valid], img[valid]))
    const = all(np.all(tta_predict(lambda x: np.full(x.shape, 0.7), img, m) == 0.7) for m in ALL_METHODS)
    counts = [len(tta_expand(img, m)) for m in (TtaMethod.M1, TtaMethod.M4, TtaMethod.M8)]
    return {"exact flip/shift round trips": exact, "constant predictor": const, "counts 2/5/8": counts == [2, 5, 8]}


def check_pipeline(workdir: Path):
    data = workdir / "data"
    write_synthetic_cohort(data, count=20, side=256, seed=0)
    cfg_path = workdir / "c8.toml"
    cfg_path.write_text(
        f'manifest = "{data / "manifest.csv"}"\nout = "{workdir / "o8"}"\nresolutions = [256]\n'
        "synthetic_snapshots = 4\nsynthetic_fidelity = 1.0\nsynthetic_fidelity_step = 0.25\n"
        "topk = [2, 3, 4]\n"
    )
    _run_cli("report", "--config", cfg_path)
    with open(workdir / "o8" / "reports" / "eval.csv", newline="") as fh:
        s1 = next(r for r in csv.DictReader(fh) if r["config"] == "S1")
    with open(workdir / "o8" / "reports" / "tta_selection.csv", newline="") as fh:
        sel = list(csv.DictReader(fh))
    argmax = all(float(r["val_iou"]) >= max(float(r[f"val_iou_M{i}"]) for i in range(1, 9)) for r in sel)

    lv = Study(load_config(cfg_path)).level(256, 256)
    s1_report = next(r.report for r in lv.plain_results if r.snapshot_id == "S1")
    perfect = (s1_report.iou, s1_report.dice, s1_report.ssim) == (1.0, 1.0, 1.0)
    exact_argmax = all(all(s.iou >= r.iou for r in s.per_method.values()) for s in lv.selections)
    worst = 0.0
    for k in (2, 3, 4):
        avg = average_topk(lv.tta_test_maps, lv.ranking, k)
        for i, m in enumerate(avg):
            ref = np.mean([lv.tta_test_maps[s][i] for s in lv.ranking[:k]], axis=0)
            worst = max(worst, float(np.max(np.abs(m - ref))))
    return {
        "fidelity 1: IoU = Dice = SSIM = 1": perfect and s1["iou"] == s1["dice"] == s1["ssim"] == "1.0000",
        "TTA choice is the argmax": argmax and exact_argmax,
        f"top-k mean within 1e-12 (worst {worst:.1e})": worst <= 1e-12,
    }


def check_schedule():
    s = LrSchedule()
    lrs = [cyclic_lr(e, s) for e in range(s.total_epochs)]
    return {
        "epoch 0 -> 1e-2": math.isclose(lrs[0], 1e-2, rel_tol=1e-12),
        "epoch 39 -> 1e-8": math.isclose(lrs[39], 1e-8, rel_tol=1e-9),
        "epoch 40 -> 1e-2": math.isclose(lrs[40], 1e-2, rel_tol=1e-12),
        "period 40": s.cycle_len == 40 and all(lrs[e] == lrs[e - 40] for e in range(40, 320)),
        "bounded": all(1e-8 * (1 - 1e-9) <= v <= 1e-2 * (1 + 1e-12) for v in lrs),
    }


def check_determinism(workdir: Path):
    data = workdir / "data10"
    write_synthetic_cohort(data, count=20, side=256, seed=1)
    outs = []
    for run in ("a", "b"):
        out = workdir / f"o10{run}"
        cfg = workdir / f"c10{run}.toml"
        cfg.write_text(
            f'manifest = "{data / "manifest.csv"}"\nout = "{out}"\nresolutions = [256]\nseed = 3\n'
            "synthetic_snapshots = 3\nsynthetic_fidelity = 0.7\nsynthetic_fidelity_step = 0.1\n"
            "synthetic_blur = 1.5\ntopk = [2, 3]\n"
        )
        for cmd in ("split", "stats", "prep", "report"):
            _run_cli(cmd, "--config", cfg)
        outs.append(out)
    csvs = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
    same = bool(csvs) and all((outs[0] / r).read_bytes() == (outs[1] / r).read_bytes() for r in csvs)
    pngs = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.png"))
    same_png = all((outs[0] / r).read_bytes() == (outs[1] / r).read_bytes() for r in pngs)
    return {f"{len(csvs)} CSV reports byte-identical": same, f"{len(pngs)} PNGs byte-identical": same_png}


CRITERIA = [
    (1, "aspect-ratio width rule matches the published ladder", check_aspect_ratio_rule, None),
    (2, "287-record split is 201/29/57 and seed-deterministic", check_split_sizes, None),
    (3, "Clopper-Pearson interval and closed-form endpoints", check_clopper_pearson, None),
    (4, "SSIM matches the direct-loop oracle", check_ssim_oracle, 10.0),
    (5, "SRE hand cases", check_sre, None),
    (6, "threshold search is optimal on the 200-point grid", check_threshold_search, 5.0),
    (7, "TTA geometry and expansion counts", check_tta_geometry, 5.0),
    (8, "synthetic end-to-end pipeline", check_pipeline, 60.0),
    (9, "cyclic learning-rate schedule", check_schedule, None),
    (10, "CLI runs are byte-identical", check_determinism, 120.0),
]

_NEEDS_DIR = {8, 10}


def _evaluate(number, title, fn, budget, workdir=None):
    start = time.perf_counter()
    checks = fn(workdir) if number in _NEEDS_DIR else fn()
    return number, title, checks, time.perf_counter() - start, budget


@pytest.mark.parametrize("number,title,fn,budget", CRITERIA, ids=[f"criterion_{c[0]:02d}" for c in CRITERIA])
def test_criterion(number, title, fn, budget, tmp_path):
    _report(*_evaluate(number, title, fn, budget, tmp_path))


if __name__ == "__main__":
    failures = 0
    with tempfile.TemporaryDirectory() as tmp:
        for number, title, fn, budget in CRITERIA:
            wd = Path(tmp) / f"c{number}"
            wd.mkdir()
            try:
                line = _verdict(*_evaluate(number, title, fn, budget, wd))
            except Exception as exc:
                line = f"[FAIL] criterion {number:2d}: {title} (error: {exc})"
            print(line)
            failures += line.startswith("[FAIL]")
    sys.exit(1 if failures else 0)
