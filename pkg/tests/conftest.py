import numpy as np
import pytest


def smooth_image(shape=(48, 40), seed=0):
    """Seeded smooth field in [0, 1]: a few low-frequency sinusoids."""
    rng = np.random.default_rng(seed)
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.zeros(shape)
    for _ in range(3):
        fx, fy, ph = rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0, 2 * np.pi)
        img += np.sin(2 * np.pi * (fx * xx + fy * yy) + ph)
    img -= img.min()
    return img / img.max()


def disk_mask(shape, center, radius):
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]]
    return (yy - center[0]) ** 2 + (xx - center[1]) ** 2 <= radius**2


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
