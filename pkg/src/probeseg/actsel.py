"""
Greedy embedding clustering: turn head outputs into interaction points and masks.

The same routine picks training interactions and produces test-time proposals.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from probeseg.imaging import POOL_FACTOR, BinaryMask
from probeseg.predictor import ForwardOut

logger = logging.getLogger(__name__)

DEFAULT_THETA = 0.0
CLUSTER_RADIUS = 1.0
FORCE_CLASSES = 3


@dataclass(frozen=True)
class ActionProposal:
    point: tuple[int, int]
    force_class: int
    mask: BinaryMask
    score: float
    degenerate: bool = False

    @property
    def confidence(self) -> float:
        return float(expit(self.score))

    @property
    def input_point(self) -> tuple[int, int]:
        """Center of the point's block at input resolution."""
        return POOL_FACTOR * self.point[0] + 1, POOL_FACTOR * self.point[1] + 1


def select_actions(
    out: ForwardOut, n: int, theta: float = DEFAULT_THETA
) -> list[ActionProposal]:
    """
    Up to ``n`` proposals in selection order.

    Each round seeds at the highest remaining score (first in row-major order on ties),
    gathers the pixels within distance 1 of the seed embedding, recenters on their mean
    and takes everything within distance 1 of it as the mask. Masked pixels are removed
    from later rounds. Stops early once the best remaining score is below ``theta``.
    """
    height, width = out.s.shape
    scores = out.s.ravel()
    flat = out.e.reshape(out.e.shape[0], -1).T
    active = np.ones(height * width, dtype=bool)
    proposals: list[ActionProposal] = []

    while len(proposals) < n and active.any():
        masked = np.where(active, scores, -np.inf)
        idx = int(np.argmax(masked))
        if masked[idx] < theta:
            break
        near_seed = active & (np.sum((flat - flat[idx]) ** 2, axis=1) < CLUSTER_RADIUS**2)
        center = flat[near_seed].mean(axis=0)
        mask = active & (np.sum((flat - center) ** 2, axis=1) < CLUSTER_RADIUS**2)
        degenerate = not mask[idx]
        if degenerate:
            logger.debug(f"Seed {divmod(idx, width)} fell outside its own cluster; keeping it")
            mask[idx] = True
        row, col = divmod(idx, width)
        proposals.append(
            ActionProposal(
                point=(row, col),
                force_class=int(np.argmax(out.m[:, row, col])),
                mask=mask.reshape(height, width),
                score=float(scores[idx]),
                degenerate=degenerate,
            )
        )
        active &= ~mask
    return proposals


def random_actions(
    n: int, rng: np.random.Generator, size: int = 100
) -> list[tuple[tuple[int, int], int]]:
    """``n`` uniform (point, force class) pairs at output resolution."""
    rows = rng.integers(0, size, size=n)
    cols = rng.integers(0, size, size=n)
    classes = rng.integers(0, FORCE_CLASSES, size=n)
    return [((int(r), int(c)), int(k)) for r, c, k in zip(rows, cols, classes)]
