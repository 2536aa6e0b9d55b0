import numpy as np
import pytest

from maskpipe import io
from maskpipe.figures import GT_COLOR, PRED_COLOR, boundary, contour_overlay, heatmap_rgb, quality_map_rgb
from maskpipe.metrics import ssim

from conftest import disk_mask, smooth_image


class TestBoundary:
    def test_square_ring(self):
        m = np.zeros((10, 10), bool)
        m[2:7, 3:8] = True
        b = boundary(m)
        expected = m.copy()
        expected[3:6, 4:7] = False
        assert np.array_equal(b, expected)

    def test_border_counts(self):
        assert boundary(np.ones((4, 5), bool)).sum() == 2 * 4 + 2 * 5 - 4

    def test_subset_of_mask(self, rng):
        m = rng.random((20, 20)) > 0.4
        assert not np.any(boundary(m) & ~m)

    def test_empty(self):
        assert not boundary(np.zeros((6, 6), bool)).any()


class TestOverlay:
    def test_colors_native(self):
        img = smooth_image((40, 40))
        gt = disk_mask((40, 40), (20, 20), 10)
        pred = disk_mask((40, 40), (20, 20), 6)
        out = contour_overlay(img, gt, pred, side=None)
        assert np.all(out[boundary(gt)] == GT_COLOR)
        assert np.all(out[boundary(pred)] == PRED_COLOR)
        untouched = ~(boundary(gt) | boundary(pred))
        assert np.array_equal(out[untouched][:, 0], img[untouched])

    def test_display_size(self):
        img = smooth_image((40, 30))
        out = contour_overlay(img, np.zeros((40, 30), bool), np.zeros((40, 30), bool))
        assert out.shape == (256, 256, 3)
        assert out.min() >= 0 and out.max() <= 1

    def test_mismatch(self):
        with pytest.raises(ValueError):
            contour_overlay(np.zeros((4, 4)), np.zeros((4, 5), bool), np.zeros((4, 4), bool))


class TestQualityMap:
    def test_perfect_is_dark_red(self):
        a = smooth_image((24, 24))
        rgb = quality_map_rgb(ssim(a, a).quality_map)
        assert np.allclose(rgb, (0.5, 0, 0))

    def test_negative_values_clamped(self):
        rgb = quality_map_rgb(np.array([[-0.4, 1.0]]))
        assert np.allclose(rgb[0, 0], (0, 0, 0.5))

    def test_rescaled(self):
        assert quality_map_rgb(np.zeros((20, 30)), side=64).shape == (64, 64, 3)

    def test_heatmap(self):
        h = np.linspace(0, 1, 12).reshape(3, 4)
        assert heatmap_rgb(h).shape == (3, 4, 3)


class TestIo:
    def test_prob16_round_trip(self, tmp_path, rng):
        p = rng.random((9, 11))
        io.write_prob16(tmp_path / "p.png", p)
        back = io.read_gray(tmp_path / "p.png")
        assert np.array_equal(back, io.quantize16(p))
        assert np.max(np.abs(back - p)) <= 0.5 / 65535 + 1e-15

    def test_gray8_round_trip(self, tmp_path):
        img = np.arange(256, dtype=float).reshape(16, 16) / 255
        io.write_gray8(tmp_path / "g.png", img)
        assert np.array_equal(io.read_gray(tmp_path / "g.png"), img)
        assert io.image_size(tmp_path / "g.png") == (16, 16)

    def test_mask8(self, tmp_path):
        m = disk_mask((12, 14), (6, 7), 4)
        io.write_mask8(tmp_path / "m.png", m)
        back = io.read_gray(tmp_path / "m.png")
        assert set(np.unique(back)) <= {0.0, 1.0}
        assert np.array_equal(back == 1.0, m)

    def test_rgb(self, tmp_path):
        io.write_rgb8(tmp_path / "c.png", np.zeros((3, 4, 3)))
        assert io.image_size(tmp_path / "c.png") == (4, 3)

    def test_bytes_deterministic(self, tmp_path, rng):
        p = rng.random((20, 20))
        io.write_prob16(tmp_path / "a.png", p)
        io.write_prob16(tmp_path / "b.png", p)
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
