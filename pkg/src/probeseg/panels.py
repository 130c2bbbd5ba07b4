"""
Qualitative figures: prediction panels, gradient heatmaps and supervision debug views.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib import patches  # noqa: E402
from numpy.typing import NDArray  # noqa: E402
from scipy.special import expit  # noqa: E402
from skimage.color import label2rgb  # noqa: E402
from skimage.segmentation import mark_boundaries  # noqa: E402

from probeseg.actsel import ActionProposal  # noqa: E402
from probeseg.exceptions import FileWriteError  # noqa: E402
from probeseg.imaging import BinaryMask, Grid, ImageRGB, LabelMap, nearest_upsample  # noqa: E402
from probeseg.predictor import ForwardOut  # noqa: E402
from probeseg.selfsup import SupervisionResult, smoothed_success  # noqa: E402

logger = logging.getLogger(__name__)

MASS_COLORS = np.array([[0.2, 0.6, 1.0], [1.0, 0.8, 0.2], [0.9, 0.2, 0.2]])


def _label_map(masks: Sequence[BinaryMask], shape: tuple[int, int]) -> LabelMap:
    labels = np.zeros(shape, dtype=np.int64)
    for i, mask in enumerate(masks, start=1):
        labels[mask & (labels == 0)] = i
    return labels


def _save(fig: plt.Figure, path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=100, bbox_inches="tight")
    except OSError as e:
        raise FileWriteError(f"Cannot write figure {path}", details=str(e))
    finally:
        plt.close(fig)
    logger.debug(f"Wrote {path}")
    return path


def save_prediction_panel(
    path: Path,
    rgb: ImageRGB,
    out: ForwardOut,
    proposals: Sequence[ActionProposal],
    gt_masks: Sequence[BinaryMask] = (),
) -> Path:
    """Input, interaction scores, predicted mass, instance proposals and ground truth."""
    shape = out.s.shape
    fig, axes = plt.subplots(nrows=1, ncols=5, figsize=(17, 3.6))
    axes[0].imshow(rgb)
    axes[0].set_title("input")

    im = axes[1].imshow(expit(out.s), vmin=0, vmax=1, cmap="viridis")
    axes[1].set_title("interaction score")
    fig.colorbar(im, ax=axes[1], fraction=0.046)

    mass = MASS_COLORS[np.argmax(out.m, axis=0)] * expit(out.s)[..., None]
    axes[2].imshow(mass)
    axes[2].set_title("mass (light/medium/heavy)")

    labels = _label_map([p.mask for p in proposals], shape)
    axes[3].imshow(label2rgb(labels, image=rgb[1::3, 1::3], bg_label=0, alpha=0.5))
    for p in proposals:
        r, c = p.point
        axes[3].add_patch(patches.Circle((c, r), radius=1.2, color="white"))
    axes[3].set_title(f"proposals ({len(proposals)})")

    gt = _label_map(gt_masks, shape)
    axes[4].imshow(label2rgb(gt, image=rgb[1::3, 1::3], bg_label=0, alpha=0.5))
    axes[4].set_title("ground truth")

    for ax in axes:
        ax.set_axis_off()
    return _save(fig, path)


def save_gradient_heatmaps(
    path: Path, g_s: Grid, g_m: NDArray[np.float64], g_e: NDArray[np.float64]
) -> Path:
    """Score gradient, per-class force gradients and embedding gradient magnitude."""
    panels = [("score", g_s)]
    panels += [(f"force {k}", g_m[k]) for k in range(g_m.shape[0])]
    panels.append(("|embedding|", np.linalg.norm(g_e, axis=0)))

    fig, axes = plt.subplots(nrows=1, ncols=len(panels), figsize=(3.4 * len(panels), 3.2))
    for ax, (title, grid) in zip(axes, panels):
        bound = float(np.abs(grid).max()) or 1.0
        cmap = "magma" if title.startswith("|") else "coolwarm"
        vmin = 0.0 if title.startswith("|") else -bound
        im = ax.imshow(grid, cmap=cmap, vmin=vmin, vmax=bound)
        ax.set_title(title)
        ax.set_axis_off()
        fig.colorbar(im, ax=ax, fraction=0.046)
    return _save(fig, path)


def save_selfsup_panel(
    path: Path,
    before: ImageRGB,
    after: ImageRGB,
    result: SupervisionResult,
    point: tuple[int, int],
    labels: LabelMap | None = None,
) -> Path:
    """Both frames, the change mask B, the grown mask B+ and the smoothed success field."""
    ncols = 6 if labels is not None else 5
    fig, axes = plt.subplots(nrows=1, ncols=ncols, figsize=(3.4 * ncols, 3.4))
    axes[0].imshow(before)
    axes[0].set_title("before")
    axes[1].imshow(after)
    axes[1].set_title("after")
    axes[2].imshow(nearest_upsample(result.change), cmap="gray")
    axes[2].set_title(f"B ({int(result.change.sum())})")
    axes[3].imshow(nearest_upsample(result.mask), cmap="gray")
    axes[3].set_title(f"B+ ({int(result.mask.sum())})")
    field = smoothed_success(result.mask)
    axes[4].imshow(field, cmap="viridis")
    axes[4].add_patch(patches.Circle((point[1], point[0]), radius=1.0, color="red"))
    verdict = "successful" if result.successful else "unsuccessful"
    axes[4].set_title(f"{field[point]:.2f} -> {verdict}")
    if labels is not None:
        axes[5].imshow(mark_boundaries(before, labels))
        axes[5].set_title("superpixels")
    for ax in axes:
        ax.set_axis_off()
    return _save(fig, path)
