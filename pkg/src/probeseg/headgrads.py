"""
Closed-form ascent directions for the three heads.

No loss value is ever formed. Each function returns, per output pixel, the direction in
which the corresponding head output should move; :func:`probeseg.predictor.backward`
negates and backpropagates them.
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import expit

from probeseg.exceptions import ForceTargetError, ShapeMismatchError
from probeseg.imaging import BinaryMask, Grid, convolve5
from probeseg.records import Feedback, InteractionRecord

FORCE_CLASSES = 3
FORCE_GRAD_SCALE = 0.1
EMBED_MARGIN = 1.5


@dataclass(frozen=True)
class TargetMaps:
    fg: Grid
    bg: Grid
    ft: NDArray[np.float64]


def _impulses(points: Iterable[tuple[int, int]], shape: tuple[int, int]) -> Grid:
    grid = np.zeros(shape, dtype=np.float64)
    for r, c in points:
        grid[r, c] += 1.0
    return grid


def build_fg_bg(
    successful: Sequence[tuple[int, int]],
    unsuccessful: Sequence[tuple[int, int]],
    shape: tuple[int, int] = (100, 100),
) -> tuple[Grid, Grid]:
    """Kernel-smoothed impulse maps of successful (fg) and unsuccessful (bg) points."""
    fg = convolve5(_impulses(successful, shape))
    bg = convolve5(_impulses(unsuccessful, shape))
    return fg, bg


def score_grad(s: Grid, fg: Grid, bg: Grid) -> Grid:
    if not (s.shape == fg.shape == bg.shape):
        raise ShapeMismatchError(
            "Score and target maps differ in shape", details=f"{s.shape} {fg.shape} {bg.shape}"
        )
    up = fg * expit(-s) * np.exp(-0.5 * np.maximum(s, 0.0) ** 2)
    down = bg * expit(s) * np.exp(-0.5 * np.minimum(s, 0.0) ** 2)
    return np.asarray(up - down)


def force_target_column(feedback: Feedback, r: int) -> NDArray[np.float64]:
    """
    Zero-mean, unit-L1 target over force classes for one successful interaction.

    ``too_small`` raises every class above ``r``; ``too_large`` every class below it.
    """
    if r not in range(FORCE_CLASSES):
        raise ForceTargetError(f"Force class must be 0..2, got {r}")
    support = np.zeros(FORCE_CLASSES)
    if feedback is Feedback.CORRECT:
        support[r] = 1.0
    elif feedback is Feedback.TOO_SMALL:
        if r == FORCE_CLASSES - 1:
            raise ForceTargetError("'too_small' is impossible for the largest force class")
        support[r + 1 :] = 1.0
    elif feedback is Feedback.TOO_LARGE:
        if r == 0:
            raise ForceTargetError("'too_large' is impossible for the smallest force class")
        support[:r] = 1.0
    else:
        raise ForceTargetError(f"No force target for feedback {feedback.value!r}")
    column = support - support.mean()
    return column / np.abs(column).sum()


def build_force_targets(
    records: Iterable[InteractionRecord], shape: tuple[int, int] = (100, 100)
) -> NDArray[np.float64]:
    """
    Force targets of shape (3, H, W).

    Columns of records that share a pixel add up. Unsuccessful records are skipped.
    """
    impulses = np.zeros((FORCE_CLASSES, *shape), dtype=np.float64)
    for rec in records:
        if not rec.successful:
            continue
        r, c = rec.point
        impulses[:, r, c] += force_target_column(rec.feedback, rec.force_class)
    return np.stack([convolve5(impulses[k]) for k in range(FORCE_CLASSES)])


def force_grad(m: NDArray[np.float64], ft: NDArray[np.float64]) -> NDArray[np.float64]:
    if m.shape != ft.shape:
        raise ShapeMismatchError(
            "Force logits and targets differ in shape", details=f"{m.shape} vs {ft.shape}"
        )
    up = (ft > 0) * expit(-m) * np.exp(-0.5 * np.maximum(m, 0.0) ** 2)
    down = (ft < 0) * expit(m) * np.exp(-0.5 * np.minimum(m, 0.0) ** 2)
    return np.asarray(FORCE_GRAD_SCALE * ft * (up + down))


def mask_distances(e: NDArray[np.float64], mask: BinaryMask) -> Grid:
    """Squared distance of every embedding to the mean embedding over ``mask``."""
    mean = e[:, mask].mean(axis=1)
    return np.asarray(np.sum((e - mean[:, None, None]) ** 2, axis=0))


def distance_grad(d: Grid, mask: BinaryMask) -> Grid:
    """Ascent direction on d: pull mask pixels in, push the rest beyond the margin."""
    pull = EMBED_MARGIN * d / (1.0 + d)
    push = np.exp(-((d / EMBED_MARGIN) ** 4))
    return np.where(mask, -pull, push)


def embed_grad(e: NDArray[np.float64], masks: Sequence[BinaryMask]) -> NDArray[np.float64]:
    """
    Sum over masks of the per-mask embedding gradient, each weighted by 1/area.

    The mask mean is held constant. The derivative of the squared distance is clamped
    per component to [-1, 1].
    """
    grad = np.zeros_like(e, dtype=np.float64)
    for mask in masks:
        if mask.shape != e.shape[1:]:
            raise ShapeMismatchError(
                "Mask does not match the embedding field", details=f"{mask.shape} vs {e.shape}"
            )
        area = int(np.count_nonzero(mask))
        if area == 0:
            continue
        mean = e[:, mask].mean(axis=1)
        diff = e - mean[:, None, None]
        d = np.sum(diff**2, axis=0)
        g_d = distance_grad(d, mask)
        grad += np.clip(2.0 * diff, -1.0, 1.0) * g_d[None] / area
    return grad


def targets_for(records: Sequence[InteractionRecord], shape: tuple[int, int]) -> TargetMaps:
    """fg/bg and force targets for all records of one image."""
    fg, bg = build_fg_bg(
        [rec.point for rec in records if rec.successful],
        [rec.point for rec in records if not rec.successful],
        shape,
    )
    return TargetMaps(fg=fg, bg=bg, ft=build_force_targets(records, shape))
