"""
Class-agnostic detection metrics and relative-mass accuracy.

Average precision follows the COCO evaluator: detections are matched greedily in
descending confidence to the best still-unmatched ground truth with IoU >= threshold,
precision is made monotone and sampled at 101 recall points.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from probeseg.imaging import BinaryMask

Box = tuple[int, int, int, int]  # row0, col0, row1, col1 (exclusive)

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
MASS_CLASSES = 3


@dataclass(frozen=True)
class Detection:
    mask: BinaryMask
    bbox: Box
    confidence: float
    mass_class: int


@dataclass(frozen=True)
class Instance:
    mask: BinaryMask
    bbox: Box
    mass_class: int


@dataclass
class ImageResult:
    """Detections and reachable ground truth of one evaluated location."""

    detections: list[Detection] = field(default_factory=list)
    instances: list[Instance] = field(default_factory=list)


def bbox_of(mask: BinaryMask) -> Box | None:
    """Tight box of a mask, or None for an empty mask."""
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return float(np.count_nonzero(a & b) / union)


def box_iou(a: Box, b: Box) -> float:
    rows = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    cols = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = rows * cols
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0


def iou(a: BinaryMask | Box, b: BinaryMask | Box) -> float:
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        return mask_iou(a, b)
    return box_iou(tuple(a), tuple(b))  # type: ignore[arg-type]


def _iou_matrix(dets: Sequence[Detection], gts: Sequence[Instance], kind: str) -> NDArray:
    out = np.zeros((len(dets), len(gts)))
    for i, d in enumerate(dets):
        for j, g in enumerate(gts):
            out[i, j] = mask_iou(d.mask, g.mask) if kind == "mask" else box_iou(d.bbox, g.bbox)
    return out


def match_image(
    result: ImageResult, threshold: float, kind: str = "bbox"
) -> list[tuple[Detection, int]]:
    """
    Detections of one image in matching order, each with its matched instance index or -1.
    """
    if kind not in ("bbox", "mask"):
        raise ValueError(f"kind must be 'bbox' or 'mask', got {kind!r}")
    order = np.argsort([-d.confidence for d in result.detections], kind="mergesort")
    dets = [result.detections[i] for i in order]
    ious = _iou_matrix(dets, result.instances, kind)
    taken = np.zeros(len(result.instances), dtype=bool)
    matches: list[tuple[Detection, int]] = []
    for i, det in enumerate(dets):
        best, m = min(threshold, 1 - 1e-10), -1
        for j in range(len(result.instances)):
            if taken[j] or ious[i, j] < best:
                continue
            best, m = ious[i, j], j
        if m >= 0:
            taken[m] = True
        matches.append((det, m))
    return matches


def _interpolated_ap(scores: NDArray, tp: NDArray, n_gt: int) -> float:
    if n_gt == 0:
        return float("nan")
    if scores.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="mergesort")
    tp = tp[order].astype(np.float64)
    tps = np.cumsum(tp)
    fps = np.cumsum(1.0 - tp)
    recall = tps / n_gt
    precision = tps / np.maximum(tps + fps, np.spacing(1))
    # precision envelope, non-increasing in recall
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.where(idx < precision.size, precision[np.minimum(idx, precision.size - 1)], 0.0)
    return float(np.mean(sampled))


def average_precision(
    results: Sequence[ImageResult],
    iou_threshold: float = 0.5,
    kind: str = "bbox",
    require_mass: bool = False,
) -> float:
    """
    Class-agnostic AP at one IoU threshold; NaN when there is no ground truth at all.

    With ``require_mass`` a matched detection only counts as a true positive when its mass
    class equals the instance's; the instance is consumed either way.
    """
    scores: list[float] = []
    tps: list[bool] = []
    n_gt = 0
    for result in results:
        n_gt += len(result.instances)
        for det, m in match_image(result, iou_threshold, kind):
            hit = m >= 0
            if hit and require_mass:
                hit = det.mass_class == result.instances[m].mass_class
            scores.append(det.confidence)
            tps.append(hit)
    return _interpolated_ap(np.asarray(scores, dtype=np.float64), np.asarray(tps), n_gt)


def mean_average_precision(results: Sequence[ImageResult], kind: str = "bbox") -> float:
    """AP averaged over IoU thresholds 0.50:0.05:0.95."""
    return float(np.mean([average_precision(results, t, kind) for t in IOU_THRESHOLDS]))


@dataclass(frozen=True)
class MassMetrics:
    accuracy: float
    confusion: NDArray[np.float64]
    counts: NDArray[np.int64]
    ap50_mass_bbox: float


def mass_metrics(results: Sequence[ImageResult]) -> MassMetrics:
    """
    Mass confusion over detections matched at bbox IoU 0.5.

    Rows index the ground-truth class and are normalized; absent classes keep all-zero
    rows and are left out of the mean per-class accuracy.
    """
    counts = np.zeros((MASS_CLASSES, MASS_CLASSES), dtype=np.int64)
    for result in results:
        for det, m in match_image(result, 0.5, "bbox"):
            if m >= 0:
                counts[result.instances[m].mass_class, det.mass_class] += 1
    totals = counts.sum(axis=1, keepdims=True)
    confusion = np.divide(
        counts, totals, out=np.zeros((MASS_CLASSES, MASS_CLASSES)), where=totals > 0
    )
    present = totals[:, 0] > 0
    accuracy = float(np.mean(np.diag(confusion)[present])) if present.any() else float("nan")
    return MassMetrics(
        accuracy=accuracy,
        confusion=confusion,
        counts=counts,
        ap50_mass_bbox=average_precision(results, 0.5, "bbox", require_mass=True),
    )
