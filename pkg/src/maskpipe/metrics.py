"""Segmentation metrics: IoU/Dice, windowed SSIM with quality maps, SRE and
Clopper-Pearson intervals, plus set-level aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import beta as beta_dist

from .raster import as_gray, as_mask

# --------------------------------------------------------------------------
# pixel-wise overlap


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def empty(self) -> bool:
        """True when neither prediction nor ground truth has foreground."""
        return self.tp + self.fp + self.fn == 0


def confusion(pred, gt) -> ConfusionCounts:
    p = as_mask(pred, "prediction")
    g = as_mask(gt, "ground truth")
    if p.shape != g.shape:
        raise ValueError(f"prediction {p.shape} and ground truth {g.shape} dims differ")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def iou(c: ConfusionCounts) -> float:
    """tp / (tp + fp + fn); 1.0 when both masks are empty."""
    denom = c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else c.tp / denom


def dice(c: ConfusionCounts) -> float:
    """2 tp / (2 tp + fp + fn); 1.0 when both masks are empty."""
    denom = 2 * c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else 2 * c.tp / denom


# --------------------------------------------------------------------------
# SSIM


@dataclass(frozen=True)
class SsimParams:
    window_side: int = 11
    gaussian_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.window_side < 3 or self.window_side % 2 == 0:
            raise ValueError(f"window_side must be odd and >= 3, got {self.window_side}")
        if self.k1 <= 0 or self.k2 <= 0 or self.dynamic_range <= 0 or self.gaussian_sigma <= 0:
            raise ValueError("k1, k2, sigma and dynamic range must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2.0

    def window_1d(self) -> np.ndarray:
        """Normalised 1D Gaussian taps; the 2D window is their outer product."""
        x = np.arange(self.window_side) - self.window_side // 2
        g = np.exp(-(x**2) / (2.0 * self.gaussian_sigma**2))
        return g / g.sum()


@dataclass(frozen=True)
class SsimResult:
    score: float
    quality_map: np.ndarray

    @property
    def display_map(self) -> np.ndarray:
        """Quality map clamped to [0, 1] for colormap rendering."""
        return np.clip(self.quality_map, 0.0, 1.0)


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of ``img`` with ``outer(g, g)``."""
    k = g.size
    rows = sliding_window_view(img, k, axis=1) @ g
    return sliding_window_view(rows, k, axis=0) @ g


def ssim(a, b, p: SsimParams = SsimParams()) -> SsimResult:
    """Gaussian-windowed SSIM between two gray images.

    Local means, variances and covariance are Gaussian-weighted statistics
    over each fully contained window. The per-pixel index combines the
    luminance, contrast and structure terms; the score is the mean over the
    valid window positions and the map is edge-replicated back to the input
    size.
    """
    a = as_gray(a, "a")
    b = as_gray(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"SSIM inputs differ in shape: {a.shape} vs {b.shape}")
    k = p.window_side
    if min(a.shape) < k:
        raise ValueError(f"image {a.shape[1]}x{a.shape[0]} smaller than the {k}x{k} SSIM window")

    g = p.window_1d()
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    mu_aa = mu_a * mu_a
    mu_bb = mu_b * mu_b
    mu_ab = mu_a * mu_b
    var_a = _filter_valid(a * a, g) - mu_aa
    var_b = _filter_valid(b * b, g) - mu_bb
    cov = _filter_valid(a * b, g) - mu_ab
    c1, c2, c3 = p.c1, p.c2, p.c3

    if p.alpha == p.beta == p.gamma == 1.0:
        # c * s collapses to one ratio when C3 = C2 / 2
        local = ((2.0 * mu_ab + c1) * (2.0 * cov + c2)) / ((mu_aa + mu_bb + c1) * (var_a + var_b + c2))
    else:
        sd_a = np.sqrt(np.maximum(var_a, 0.0))
        sd_b = np.sqrt(np.maximum(var_b, 0.0))
        lum = (2.0 * mu_ab + c1) / (mu_aa + mu_bb + c1)
        con = (2.0 * sd_a * sd_b + c2) / (var_a + var_b + c2)
        struct = (cov + c3) / (sd_a * sd_b + c3)
        local = lum**p.alpha * con**p.beta * struct**p.gamma

    score = float(local.mean())
    half = k // 2
    full = np.pad(local, half, mode="edge")
    return SsimResult(score, full)


# --------------------------------------------------------------------------
# SRE


def sre(gt, pred) -> float:
    """Signal-to-reconstruction error ratio in dB.

    ``10 log10(mean(gt)^2 / mse)``. Returns ``+inf`` for a perfect
    reconstruction and ``-inf`` when ``gt`` has zero mean but the error
    does not vanish.
    """
    a = np.asarray(gt, dtype=np.float64)
    a_hat = np.asarray(pred, dtype=np.float64)
    if a.shape != a_hat.shape:
        raise ValueError(f"SRE inputs differ in shape: {a.shape} vs {a_hat.shape}")
    if a.size == 0:
        raise ValueError("SRE needs at least one pixel")
    mse = float(np.mean((a_hat - a) ** 2))
    if mse == 0.0:
        return math.inf
    mu = float(a.mean())
    if mu == 0.0:
        return -math.inf
    return 10.0 * math.log10(mu * mu / mse)


# --------------------------------------------------------------------------
# confidence intervals


@dataclass(frozen=True)
class CpInterval:
    lower: float
    upper: float
    level: float
    n: int
    x: float

    def __str__(self) -> str:
        return f"({self.lower:.4f},{self.upper:.4f})"


def clopper_pearson(p_hat: float, n: int, level: float = 0.95) -> CpInterval:
    """Exact binomial interval for ``x = p_hat * n`` successes in ``n`` trials.

    ``x`` is not rounded; the beta-quantile form extends naturally to
    fractional successes.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    if n < 1 or int(n) != n:
        raise ValueError(f"n must be a positive integer, got {n}")
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError(f"p_hat must lie in [0, 1], got {p_hat}")
    alpha = 1.0 - level
    x = p_hat * n
    if x == 0:
        lower = 0.0
        upper = 1.0 - (alpha / 2.0) ** (1.0 / n)
    elif x == n:
        lower = (alpha / 2.0) ** (1.0 / n)
        upper = 1.0
    else:
        lower = float(beta_dist.ppf(alpha / 2.0, x, n - x + 1))
        upper = float(beta_dist.ppf(1.0 - alpha / 2.0, x + 1, n - x))
    return CpInterval(max(lower, 0.0), min(upper, 1.0), level, int(n), x)


# --------------------------------------------------------------------------
# set-level report


@dataclass
class MetricReport:
    """Metrics for one evaluated configuration (one report row)."""

    label: str
    n_images: int
    confusion: ConfusionCounts
    iou: float
    dice: float
    ci: CpInterval
    macro_iou: float
    macro_dice: float
    ssim: float
    sre: float
    sre_inf_count: int
    empty_count: int
    threshold: float | None = None
    per_image: list[dict] = field(default_factory=list, repr=False)

    def iou_with_ci(self) -> str:
        return f"{self.iou:.4f} {self.ci}"


def _fixed_order_mean(values: Sequence[float]) -> float:
    total = 0.0
    for v in values:
        total += v
    return total / len(values) if values else math.nan


def evaluate_set(
    preds: Sequence,
    gts: Sequence,
    images: Sequence[tuple] | None = None,
    *,
    label: str = "",
    threshold: float | None = None,
    ids: Sequence[str] | None = None,
    ssim_params: SsimParams = SsimParams(),
    level: float = 0.95,
) -> MetricReport:
    """Score binarized predictions against ground truth masks.

    IoU and Dice are reported pooled over the whole set (headline) and as
    per-image means. SSIM and SRE are per-image means computed on the
    ``images`` pairs ``(gt_image, pred_image)``; when omitted, the masks
    themselves are compared as 0/1 images. Infinite SRE values are left
    out of the mean and counted. The CI is on the pooled IoU with ``n``
    equal to the number of images.
    """
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions but {len(gts)} ground truths")
    if images is not None and len(images) != len(preds):
        raise ValueError(f"{len(images)} image pairs for {len(preds)} predictions")
    if not preds:
        raise ValueError("evaluate_set needs at least one image")

    pooled = ConfusionCounts()
    ious, dices, ssims, sres = [], [], [], []
    n_inf = 0
    n_empty = 0
    rows = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        c = confusion(p, g)
        pooled = pooled + c
        ious.append(iou(c))
        dices.append(dice(c))
        n_empty += c.empty
        if images is not None:
            ga, pa = images[i]
        else:
            ga = np.asarray(g, dtype=np.float64)
            pa = np.asarray(p, dtype=np.float64)
        s = ssim(ga, pa, ssim_params).score
        r = sre(ga, pa)
        ssims.append(s)
        if math.isinf(r):
            n_inf += 1
        else:
            sres.append(r)
        rows.append(
            {
                "id": ids[i] if ids is not None else str(i),
                "tp": c.tp,
                "fp": c.fp,
                "fn": c.fn,
                "tn": c.tn,
                "iou": ious[-1],
                "dice": dices[-1],
                "ssim": s,
                "sre": r,
                "empty": c.empty,
            }
        )

    headline = iou(pooled)
    return MetricReport(
        label=label,
        n_images=len(preds),
        confusion=pooled,
        iou=headline,
        dice=dice(pooled),
        ci=clopper_pearson(headline, len(preds), level),
        macro_iou=_fixed_order_mean(ious),
        macro_dice=_fixed_order_mean(dices),
        ssim=_fixed_order_mean(ssims),
        sre=_fixed_order_mean(sres),
        sre_inf_count=n_inf,
        empty_count=n_empty,
        threshold=threshold,
        per_image=rows,
    )
