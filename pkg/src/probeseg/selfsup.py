"""
Noisy supervision from a pair of consecutive observations.

An interaction is judged by what changed on screen: the HSV difference of the two frames
is pooled to output resolution and thresholded (B), grown to whole superpixels of the
location's first frame (B+), and tested around the interaction point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from probeseg.exceptions import ShapeMismatchError
from probeseg.imaging import (
    POOL_FACTOR,
    BinaryMask,
    ImageRGB,
    LabelMap,
    convolve5,
    felzenszwalb,
    gaussian_kernel5,
    hsv_diff,
    majority_downsample,
    mean_pool,
    nearest_upsample,
    rgb_to_hsv,
)

logger = logging.getLogger(__name__)

CHANGE_THRESHOLD = 0.01
SUPERPIXEL_COVERAGE = 0.25
SUCCESS_THRESHOLD = 1.5


@dataclass(frozen=True)
class SupervisionResult:
    change: BinaryMask
    mask: BinaryMask
    successful: bool


def change_mask(before: ImageRGB, after: ImageRGB) -> BinaryMask:
    if before.shape != after.shape:
        raise ShapeMismatchError(
            "Frames must have equal shapes", details=f"{before.shape} vs {after.shape}"
        )
    pooled = mean_pool(hsv_diff(rgb_to_hsv(before), rgb_to_hsv(after)), POOL_FACTOR)
    return np.asarray(np.sum(pooled**2, axis=-1) > CHANGE_THRESHOLD)


def superpixels(first: ImageRGB) -> LabelMap:
    """Superpixels of a location's first frame; computed once and reused for its interactions."""
    return felzenszwalb(first)


def align_superpixels(
    change: BinaryMask,
    first: ImageRGB | None = None,
    labels: LabelMap | None = None,
) -> BinaryMask:
    """
    Grow B to whole superpixels.

    A superpixel joins B+ when at least a quarter of its pixels are covered by the
    nearest-neighbor upsampled B. Pass precomputed ``labels`` to skip segmenting ``first``.
    """
    if labels is None:
        if first is None:
            raise ValueError("align_superpixels needs the first frame or its superpixels")
        labels = superpixels(first)
    covered = nearest_upsample(change, POOL_FACTOR)
    if covered.shape != labels.shape:
        raise ShapeMismatchError(
            "Change mask does not match the superpixel map",
            details=f"{covered.shape} upsampled vs {labels.shape}",
        )
    n = int(labels.max()) + 1
    sizes = np.bincount(labels.ravel(), minlength=n)
    hits = np.bincount(labels.ravel(), weights=covered.ravel().astype(np.float64), minlength=n)
    keep = hits >= SUPERPIXEL_COVERAGE * sizes
    return majority_downsample(keep[labels], POOL_FACTOR)


def success_test(mask: BinaryMask, point: tuple[int, int]) -> bool:
    r, c = point
    if not (0 <= r < mask.shape[0] and 0 <= c < mask.shape[1]):
        raise ValueError(f"Point {point} outside {mask.shape}")
    padded = np.pad(mask.astype(np.float64), 2)
    window = padded[r : r + 5, c : c + 5]
    return bool(np.sum(window * gaussian_kernel5()) >= SUCCESS_THRESHOLD)


def supervise(
    before: ImageRGB,
    after: ImageRGB,
    point: tuple[int, int],
    labels: LabelMap | None = None,
    use_superpixels: bool = True,
) -> SupervisionResult:
    """
    Judge one interaction at an output-resolution ``point``.

    ``labels`` are the superpixels of the location's first frame; without them ``before``
    is segmented. With ``use_superpixels`` off, B+ is B itself.
    """
    change = change_mask(before, after)
    if not use_superpixels:
        mask = change
    elif not change.any():
        mask = np.zeros_like(change)
    else:
        mask = align_superpixels(change, before, labels)
    successful = success_test(mask, point)
    logger.debug(
        f"Supervision at {point}: |B|={int(change.sum())} |B+|={int(mask.sum())} "
        f"successful={successful}"
    )
    return SupervisionResult(change=change, mask=mask, successful=successful)


def smoothed_success(mask: BinaryMask) -> np.ndarray:
    """Kernel-weighted mask mass at every cell; the success test thresholds one entry."""
    return convolve5(mask.astype(np.float64))
