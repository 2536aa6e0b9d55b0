"""Slow, literal reference implementations used as test oracles."""

import math

import numpy as np


def naive_ssim(a, b, side=11, sigma=1.5, k1=0.01, k2=0.03, L=1.0, alpha=1.0, beta=1.0, gamma=1.0):
    """Window-by-window SSIM straight from the luminance/contrast/structure
    definitions, with Gaussian-weighted local statistics."""
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    c3 = c2 / 2
    r = side // 2
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    win = np.exp(-(dx**2 + dy**2) / (2 * sigma**2))
    win = win / win.sum()
    h, w = a.shape
    out = np.zeros((h - side + 1, w - side + 1))
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            pa = a[i : i + side, j : j + side]
            pb = b[i : i + side, j : j + side]
            mu_a = np.sum(win * pa)
            mu_b = np.sum(win * pb)
            sd_a = math.sqrt(np.sum(win * (pa - mu_a) ** 2))
            sd_b = math.sqrt(np.sum(win * (pb - mu_b) ** 2))
            cov = np.sum(win * (pa - mu_a) * (pb - mu_b))
            lum = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
            con = (2 * sd_a * sd_b + c2) / (sd_a**2 + sd_b**2 + c2)
            struct = (cov + c3) / (sd_a * sd_b + c3)
            out[i, j] = lum**alpha * con**beta * struct**gamma
    return out.mean(), out


def brute_force_best(maps, gts, count=200):
    best = -1.0
    curve = []
    for k in range(count):
        t = k / (count - 1)
        tp = fp = fn = 0
        for p, g in zip(maps, gts):
            pred = p >= t
            tp += int(np.sum(pred & g))
            fp += int(np.sum(pred & ~g))
            fn += int(np.sum(~pred & g))
        d = tp + fp + fn
        curve.append(1.0 if d == 0 else tp / d)
        best = max(best, curve[-1])
    return best, np.array(curve)
