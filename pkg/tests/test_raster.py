import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskpipe.raster import (
    GeomTransform,
    apply_transform,
    crop,
    invert_transform,
    jet_colormap,
    jet_segment,
    pad_to,
    resample_bicubic,
)

from conftest import smooth_image


def naive_bicubic(img, tw, th, a=-0.5):
    """Per-pixel bicubic written straight from the Keys kernel definition."""

    def kernel(t):
        t = abs(t)
        if t <= 1:
            return (a + 2) * t**3 - (a + 3) * t**2 + 1
        if t < 2:
            return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
        return 0.0

    h, w = img.shape
    out = np.zeros((th, tw))
    for oy in range(th):
        sy = (oy + 0.5) * h / th - 0.5
        for ox in range(tw):
            sx = (ox + 0.5) * w / tw - 0.5
            acc = 0.0
            for j in range(math.floor(sy) - 1, math.floor(sy) + 3):
                for i in range(math.floor(sx) - 1, math.floor(sx) + 3):
                    wgt = kernel(sx - i) * kernel(sy - j)
                    acc += wgt * img[min(max(j, 0), h - 1), min(max(i, 0), w - 1)]
            out[oy, ox] = min(max(acc, 0.0), 1.0)
    return out


class TestResample:
    def test_identity(self):
        img = smooth_image()
        out = resample_bicubic(img, img.shape[1], img.shape[0])
        assert np.array_equal(out, img)

    @pytest.mark.parametrize("tw,th", [(1, 1), (5, 17), (64, 64), (200, 13)])
    def test_constant_preserved(self, tw, th):
        out = resample_bicubic(np.full((20, 30), 0.3), tw, th)
        assert out.shape == (th, tw)
        assert np.max(np.abs(out - 0.3)) <= 1e-12

    def test_checkerboard_matches_naive(self):
        board = (np.indices((8, 8)).sum(axis=0) % 2).astype(float)
        assert np.allclose(resample_bicubic(board, 4, 4), naive_bicubic(board, 4, 4), atol=1e-9, rtol=0)

    @pytest.mark.parametrize("shape,target", [((13, 9), (20, 7)), ((16, 16), (5, 11)), ((7, 30), (31, 3))])
    def test_random_matches_naive(self, shape, target, rng):
        img = rng.random(shape)
        assert np.allclose(resample_bicubic(img, *target), naive_bicubic(img, *target), atol=1e-9, rtol=0)

    def test_round_trip_smooth(self):
        img = smooth_image((64, 64), seed=3)
        back = resample_bicubic(resample_bicubic(img, 40, 50), 64, 64)
        # observed max error ~0.0073 on this field
        assert np.max(np.abs(back - img)) < 0.1

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError):
            resample_bicubic(np.zeros((4, 4)), 0, 4)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32 - 1))
    def test_range_preserved(self, tw, th, seed):
        img = np.random.default_rng(seed).random((12, 15))
        out = resample_bicubic(img, tw, th)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestTransforms:
    def test_flip_twice(self):
        img = smooth_image()
        once, v1 = apply_transform(img, GeomTransform.flip_h())
        twice, v2 = apply_transform(once, GeomTransform.flip_h())
        assert np.array_equal(twice, img)
        assert v1.all() and v2.all()
        assert np.array_equal(once[:, 0], img[:, -1])

    def test_rotate_zero_is_identity(self):
        img = smooth_image()
        out, valid = apply_transform(img, GeomTransform.rotate(0))
        assert np.array_equal(out, img)
        assert valid.all()

    def test_shift_definition(self):
        img = np.random.default_rng(0).random((32, 32))
        out, valid = apply_transform(img, GeomTransform.shift(5, 0, fill=0.25))
        assert np.all(out[:, :5] == 0.25)
        assert not valid[:, :5].any()
        assert valid[:, 5:].all()
        assert np.array_equal(out[:, 5:], img[:, :-5])

    def test_negative_vertical_shift(self):
        img = np.random.default_rng(1).random((20, 24))
        out, valid = apply_transform(img, GeomTransform.shift(0, -3))
        assert np.array_equal(out[:-3], img[3:])
        assert not valid[-3:].any() and valid[:-3].all()

    def test_inverse_kinds(self):
        assert GeomTransform.flip_h().inverse() == GeomTransform.flip_h()
        assert GeomTransform.shift(2, -3).inverse() == GeomTransform.shift(-2, 3)
        assert GeomTransform.rotate(5).inverse() == GeomTransform.rotate(-5)

    def test_preconditions(self):
        img = np.zeros((10, 10))
        with pytest.raises(ValueError):
            apply_transform(img, GeomTransform.shift(10, 0))
        with pytest.raises(ValueError):
            apply_transform(img, GeomTransform.rotate(90))

    def test_flip_round_trip_exact(self):
        img = smooth_image()
        t = GeomTransform.flip_h()
        back, valid = invert_transform(*apply_transform(img, t), t)
        assert np.array_equal(back, img) and valid.all()

    def test_shift_round_trip(self):
        img = smooth_image((30, 32))
        t = GeomTransform.shift(3, 2)
        back, valid = invert_transform(*apply_transform(img, t), t)
        assert np.array_equal(back[valid], img[valid])
        # content shifted out past the right/bottom edge is lost
        assert not valid[:, -3:].any() and not valid[-2:, :].any()
        assert valid[:-2, :-3].all()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(-7, 7), st.integers(-7, 7), st.integers(0, 2**32 - 1))
    def test_shift_round_trip_property(self, dx, dy, seed):
        img = np.random.default_rng(seed).random((16, 18))
        t = GeomTransform.shift(dx, dy)
        back, valid = invert_transform(*apply_transform(img, t), t)
        assert np.array_equal(back[valid], img[valid])
        assert valid.sum() == (16 - abs(dy)) * (18 - abs(dx))

    def test_rotate_round_trip_bound(self):
        img = smooth_image((64, 64), seed=7)
        t = GeomTransform.rotate(5)
        fwd, v = apply_transform(img, t)
        back, valid = invert_transform(fwd, v, t)
        err = np.abs(back - img)[valid].mean()
        # observed ~1e-3 for this field
        assert err < 0.02
        assert valid.mean() > 0.8

    def test_rotate_keeps_center(self):
        # a 5-degree rotation keeps the centre pixel fixed
        img = smooth_image((33, 33))
        out, _ = apply_transform(img, GeomTransform.rotate(5))
        assert out[16, 16] == pytest.approx(img[16, 16], abs=1e-12)

    def test_rotate_constant_stays_constant(self):
        out, valid = apply_transform(np.full((20, 20), 0.7), GeomTransform.rotate(-5))
        assert np.all(out[valid] == 0.7)
        assert np.all(out[~valid] == 0.0)


class TestPad:
    def test_pad_definition(self):
        img = np.random.default_rng(0).random((100, 100))
        out = pad_to(img, 128, 128, 0.0)
        assert out.shape == (128, 128)
        assert np.array_equal(out[:100, :100], img)
        assert np.all(out[100:, :] == 0) and np.all(out[:, 100:] == 0)

    def test_pad_same_dims(self):
        img = np.random.default_rng(0).random((10, 12))
        assert np.array_equal(pad_to(img, 12, 10), img)

    def test_pad_crop_round_trip(self):
        mask = np.random.default_rng(0).random((9, 7)) > 0.5
        assert np.array_equal(crop(pad_to(mask, 32, 32, False), 0, 0, 7, 9), mask)

    def test_pad_smaller_rejected(self):
        with pytest.raises(ValueError):
            pad_to(np.zeros((10, 10)), 9, 10)


class TestJet:
    @pytest.mark.parametrize(
        "v,rgb",
        [(0.0, (0, 0, 0.5)), (1.0, (0.5, 0, 0)), (0.5, (0.5, 1, 0.5)), (0.375, (0, 1, 1)), (0.625, (1, 1, 0))],
    )
    def test_anchors(self, v, rgb):
        assert np.allclose(jet_colormap(np.array([[v]]))[0, 0], rgb, atol=1e-15)

    def test_segment_monotone(self):
        v = np.linspace(0, 1, 1001)
        seg = jet_segment(v)
        assert np.all(np.diff(seg) >= 0)
        assert seg[0] == 0 and seg[-1] == 4

    def test_shape_and_range(self):
        out = jet_colormap(np.random.default_rng(0).random((6, 5)))
        assert out.shape == (6, 5, 3)
        assert out.min() >= 0 and out.max() <= 1

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            jet_colormap(np.array([[1.5]]))
