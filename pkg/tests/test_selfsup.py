"""
Unit tests for change masks, superpixel alignment and the success test
"""

import numpy as np
import pytest

from probeseg.exceptions import ShapeMismatchError
from probeseg.selfsup import (
    align_superpixels,
    change_mask,
    smoothed_success,
    success_test,
    supervise,
)


def _frames(size: int = 30) -> tuple[np.ndarray, np.ndarray]:
    before = np.full((size, size, 3), 0.5)
    before[..., 0] = 0.7
    after = before.copy()
    return before, after


def _halves(size: int = 30) -> np.ndarray:
    labels = np.zeros((size, size), dtype=np.int64)
    labels[:, size // 2 :] = 1
    return labels


class TestChangeMask:
    def test_identical_frames(self):
        before, after = _frames()
        mask = change_mask(before, after)
        assert mask.shape == (10, 10)
        assert not mask.any()

    def test_changed_block(self):
        before, after = _frames()
        after[:9, :9] = (0.1, 0.2, 0.9)
        mask = change_mask(before, after)
        assert mask[:3, :3].all()
        assert mask.sum() == 9

    def test_small_change_below_threshold(self):
        before, after = _frames()
        after[:9, :9, 2] += 0.05
        assert not change_mask(before, after).any()

    def test_shape_mismatch(self):
        before, _ = _frames()
        with pytest.raises(ShapeMismatchError):
            change_mask(before, before[:27])


class TestSuccessTest:
    def test_full_window(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[3:8, 3:8] = True
        assert success_test(mask, (5, 5))

    def test_single_cell_is_not_enough(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[5, 5] = True
        assert not success_test(mask, (5, 5))

    def test_plus_shape_passes(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[5, 4:7] = True
        mask[4:7, 5] = True
        # 1 + 4 * exp(-1)
        assert success_test(mask, (5, 5))

    def test_two_cells_fail(self):
        mask = np.zeros((10, 10), dtype=bool)
        mask[5, 5:7] = True
        assert not success_test(mask, (5, 5))

    def test_border_point_uses_zero_padding(self):
        mask = np.ones((10, 10), dtype=bool)
        # quarter of the window: (1 + e^-1 + e^-4)^2 ~ 1.87
        assert success_test(mask, (0, 0))

    def test_point_outside(self):
        with pytest.raises(ValueError):
            success_test(np.zeros((4, 4), dtype=bool), (4, 0))

    def test_smoothed_success_agrees(self, rng):
        mask = rng.uniform(size=(12, 12)) > 0.6
        smooth = smoothed_success(mask)
        for point in [(0, 0), (6, 6), (11, 3)]:
            assert success_test(mask, point) == (smooth[point] >= 1.5)


class TestAlignSuperpixels:
    def test_sparse_change_is_dropped(self):
        change = np.zeros((10, 10), dtype=bool)
        change[0, :3] = True  # 27 of 450 pixels
        assert not align_superpixels(change, labels=_halves()).any()

    def test_covered_superpixel_is_filled(self):
        change = np.zeros((10, 10), dtype=bool)
        change[:3, :5] = True  # 135 of 450 pixels
        mask = align_superpixels(change, labels=_halves())
        assert mask[:, :5].all()
        assert not mask[:, 5:].any()

    def test_needs_frame_or_labels(self):
        with pytest.raises(ValueError):
            align_superpixels(np.zeros((10, 10), dtype=bool))

    def test_label_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            align_superpixels(np.zeros((10, 10), dtype=bool), labels=_halves(33))


class TestSupervise:
    def test_without_superpixels_mask_is_change(self):
        before, after = _frames()
        after[9:24, 9:24] = (0.1, 0.2, 0.9)
        result = supervise(before, after, (5, 5), use_superpixels=False)
        assert np.array_equal(result.mask, result.change)
        assert result.successful

    def test_with_superpixels_grows_change(self):
        before, after = _frames()
        after[:9, :15] = (0.1, 0.2, 0.9)
        result = supervise(before, after, (2, 2), labels=_halves())
        assert result.change.sum() == 15
        assert result.mask[:, :5].all()
        assert result.successful

    def test_no_change_is_unsuccessful(self):
        before, after = _frames()
        result = supervise(before, after, (5, 5), labels=_halves())
        assert not result.mask.any()
        assert not result.successful

    def test_point_outside_change(self):
        before, after = _frames()
        after[:9, :9] = (0.1, 0.2, 0.9)
        result = supervise(before, after, (8, 8), use_superpixels=False)
        assert not result.successful
