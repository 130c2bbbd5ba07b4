"""
Unit tests for image operations and raster I/O
"""

import numpy as np
import pytest

from probeseg.exceptions import ImageFormatError, ShapeMismatchError
from probeseg.imaging import (
    DEPTH_FAR_PLANE,
    DEPTH_LEVELS,
    convolve5,
    decode_depth,
    decode_rgb,
    encode_depth,
    encode_rgb,
    felzenszwalb,
    gaussian_kernel5,
    hsv_diff,
    majority_downsample,
    mean_pool,
    nearest_upsample,
    quantize_depth,
    rgb_to_hsv,
)


class TestHsv:
    def test_pure_red_is_hue_zero(self):
        img = np.zeros((1, 1, 3))
        img[..., 0] = 1.0
        h, s, v = rgb_to_hsv(img)[0, 0]
        assert (h, s, v) == pytest.approx((0.0, 1.0, 1.0))

    def test_green_and_gray(self):
        img = np.array([[[0.0, 1.0, 0.0], [0.5, 0.5, 0.5]]])
        hsv = rgb_to_hsv(img)
        assert hsv[0, 0].tolist() == pytest.approx([1 / 3, 1.0, 1.0])
        assert hsv[0, 1].tolist() == pytest.approx([0.0, 0.0, 0.5])

    def test_hue_difference_takes_short_arc(self):
        a = np.array([[[0.95, 0.5, 0.5]]])
        b = np.array([[[0.05, 0.4, 0.7]]])
        diff = hsv_diff(a, b)[0, 0]
        assert diff[0] == pytest.approx(-0.1)
        assert diff[1] == pytest.approx(0.1)
        assert diff[2] == pytest.approx(-0.2)

    def test_hue_difference_magnitude_bounded(self, rng):
        a = rng.uniform(size=(8, 8, 3))
        b = rng.uniform(size=(8, 8, 3))
        assert np.all(np.abs(hsv_diff(a, b)[..., 0]) <= 0.5 + 1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            hsv_diff(np.zeros((3, 3, 3)), np.zeros((3, 6, 3)))


class TestPooling:
    def test_mean_pool_channels(self):
        img = np.arange(36, dtype=np.float64).reshape(6, 6)
        img = np.stack([img, 2 * img, np.zeros_like(img)], axis=-1)
        pooled = mean_pool(img)
        assert pooled.shape == (2, 2, 3)
        assert pooled[0, 0, 0] == pytest.approx(np.mean([0, 1, 2, 6, 7, 8, 12, 13, 14]))
        assert pooled[0, 0, 1] == pytest.approx(2 * pooled[0, 0, 0])

    def test_single_bright_pixel(self):
        img = np.zeros((3, 3))
        img[1, 2] = 9.0
        assert mean_pool(img).tolist() == [[1.0]]

    def test_mean_pool_rejects_indivisible(self):
        with pytest.raises(ShapeMismatchError):
            mean_pool(np.zeros((10, 10)))

    def test_majority_needs_five_of_nine(self):
        mask = np.zeros((3, 6), dtype=bool)
        mask.flat[[0, 1, 2, 6, 7]] = True  # 5 pixels of the left block
        mask[0, 3:6] = True
        mask[1, 3] = True  # 4 pixels of the right block
        assert majority_downsample(mask).tolist() == [[True, False]]

    def test_nearest_upsample(self):
        up = nearest_upsample(np.array([[True, False]]))
        assert up.shape == (3, 6)
        assert up[:, :3].all() and not up[:, 3:].any()


class TestKernel:
    def test_kernel_values(self):
        k = gaussian_kernel5()
        assert k.shape == (5, 5)
        assert k[2, 2] == pytest.approx(1.0)
        assert k[0, 0] == pytest.approx(np.exp(-8.0))
        assert k[2, 3] == pytest.approx(np.exp(-1.0))

    def test_impulse_response_is_kernel(self):
        grid = np.zeros((9, 9))
        grid[4, 4] = 1.0
        out = convolve5(grid)
        assert np.allclose(out[2:7, 2:7], gaussian_kernel5())
        assert out[0, 0] == 0.0

    def test_zero_padding_at_border(self):
        grid = np.zeros((5, 5))
        grid[0, 0] = 1.0
        out = convolve5(grid)
        assert out[0, 0] == pytest.approx(1.0)
        assert out[2, 2] == pytest.approx(np.exp(-8.0))

    def test_rejects_other_kernel_sizes(self):
        with pytest.raises(ShapeMismatchError):
            convolve5(np.zeros((5, 5)), np.ones((3, 3)))


class TestFelzenszwalb:
    def test_two_flat_regions(self):
        img = np.zeros((60, 90, 3))
        img[:, :45] = (0.8, 0.2, 0.2)
        img[:, 45:] = (0.2, 0.3, 0.8)
        labels = felzenszwalb(img)
        assert labels.dtype == np.int64
        assert labels.min() == 0
        assert len(np.unique(labels[:, :40])) == 1
        assert len(np.unique(labels[:, 50:])) == 1
        assert labels[0, 0] != labels[0, -1]

    def test_flat_image_is_one_segment(self):
        assert felzenszwalb(np.full((30, 30, 3), 0.4)).max() == 0

    def test_min_size_is_respected(self, rng):
        labels = felzenszwalb(rng.uniform(size=(30, 30, 3)), min_size=100)
        assert np.bincount(labels.ravel()).min() >= 100

    def test_labels_are_contiguous(self, rng):
        labels = felzenszwalb(rng.uniform(size=(40, 40, 3)), min_size=5)
        assert np.array_equal(np.unique(labels), np.arange(labels.max() + 1))

    def test_rejects_bad_parameters(self):
        img = np.zeros((9, 9, 3))
        with pytest.raises(ValueError):
            felzenszwalb(img, k=0)
        with pytest.raises(ValueError):
            felzenszwalb(img, min_size=0)


class TestRasterIO:
    def test_rgb_png(self, tmp_path, rng):
        img = rng.uniform(size=(12, 9, 3))
        encode_rgb(img, tmp_path / "img.png")
        back = decode_rgb(tmp_path / "img.png")
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12

    def test_depth_png_resolution(self, tmp_path):
        depth = np.full((6, 6), 1.0)
        depth[0, 0] = 7.5  # beyond the far plane
        encode_depth(depth, tmp_path / "depth.png")
        back = decode_depth(tmp_path / "depth.png")
        assert back[1, 1] == pytest.approx(1.0, abs=DEPTH_FAR_PLANE / DEPTH_LEVELS)
        assert back[0, 0] == pytest.approx(DEPTH_FAR_PLANE)

    def test_quantize_depth_endpoints(self):
        q = quantize_depth(np.array([[0.0, 2.5, DEPTH_FAR_PLANE]]))
        assert q.dtype == np.uint16
        assert q.tolist() == [[0, 32768, DEPTH_LEVELS]]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ImageFormatError, match="does not exist"):
            decode_rgb(tmp_path / "nope.png")

    def test_not_an_image(self, tmp_path):
        path = tmp_path / "junk.png"
        path.write_bytes(b"definitely not a png")
        with pytest.raises(ImageFormatError):
            decode_rgb(path)

    def test_depth_is_not_rgb(self, tmp_path):
        encode_depth(np.ones((4, 4)), tmp_path / "depth.png")
        with pytest.raises(ImageFormatError):
            decode_rgb(tmp_path / "depth.png")

    def test_encode_rejects_bad_shapes(self, tmp_path):
        with pytest.raises(ShapeMismatchError):
            encode_rgb(np.zeros((4, 4)), tmp_path / "x.png")
        with pytest.raises(ShapeMismatchError):
            encode_depth(np.zeros((4, 4, 3)), tmp_path / "y.png")
