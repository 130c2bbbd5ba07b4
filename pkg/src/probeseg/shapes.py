"""
Object footprints for the micro-world.

A footprint is a boolean raster on the world lattice (one cell per view pixel). Every
category is drawn inside a ``size x size`` square so placement only needs the bounding box.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from skimage.draw import disk, polygon

SHAPE_CATEGORIES: tuple[str, ...] = (
    "box",
    "disc",
    "ell",
    "tee",
    "ring",
    "bar",
    "wedge",
    "cross",
)

# Held out of NovelShapes training scenes
HELD_OUT_CATEGORIES: tuple[str, ...] = ("ring", "wedge", "cross")


def _limb(n: int) -> int:
    return max(2, n // 3)


def _box(n: int) -> NDArray[np.bool_]:
    return np.ones((n, n), dtype=bool)


def _disc(n: int) -> NDArray[np.bool_]:
    fp = np.zeros((n, n), dtype=bool)
    rr, cc = disk(((n - 1) / 2.0, (n - 1) / 2.0), n / 2.0, shape=fp.shape)
    fp[rr, cc] = True
    return fp


def _ring(n: int) -> NDArray[np.bool_]:
    fp = _disc(n)
    inner = np.zeros_like(fp)
    rr, cc = disk(((n - 1) / 2.0, (n - 1) / 2.0), n / 4.0, shape=fp.shape)
    inner[rr, cc] = True
    return fp & ~inner


def _ell(n: int) -> NDArray[np.bool_]:
    t = _limb(n)
    fp = np.zeros((n, n), dtype=bool)
    fp[:, :t] = True
    fp[n - t :, :] = True
    return fp


def _tee(n: int) -> NDArray[np.bool_]:
    t = _limb(n)
    start = (n - t) // 2
    fp = np.zeros((n, n), dtype=bool)
    fp[:t, :] = True
    fp[:, start : start + t] = True
    return fp


def _bar(n: int) -> NDArray[np.bool_]:
    t = _limb(n)
    start = (n - t) // 2
    fp = np.zeros((n, n), dtype=bool)
    fp[start : start + t, :] = True
    return fp


def _wedge(n: int) -> NDArray[np.bool_]:
    fp = np.zeros((n, n), dtype=bool)
    rr, cc = polygon([0, n, n], [0, 0, n], shape=fp.shape)
    fp[rr, cc] = True
    return fp


def _cross(n: int) -> NDArray[np.bool_]:
    t = _limb(n)
    start = (n - t) // 2
    fp = np.zeros((n, n), dtype=bool)
    fp[start : start + t, :] = True
    fp[:, start : start + t] = True
    return fp


_BUILDERS = {
    "box": _box,
    "disc": _disc,
    "ell": _ell,
    "tee": _tee,
    "ring": _ring,
    "bar": _bar,
    "wedge": _wedge,
    "cross": _cross,
}


@lru_cache(maxsize=256)
def _cached(shape: str, cells: int) -> NDArray[np.bool_]:
    fp = _BUILDERS[shape](cells)
    fp.setflags(write=False)
    return fp


def footprint(shape: str, cells: int) -> NDArray[np.bool_]:
    """Read-only footprint raster of ``cells x cells``."""
    if shape not in _BUILDERS:
        raise ValueError(f"Unknown shape category: {shape!r}")
    if cells < 3:
        raise ValueError(f"Footprint must span at least 3 cells, got {cells}")
    return _cached(shape, int(cells))


def texture(seed: int, shape: tuple[int, int], amplitude: float) -> NDArray[np.float64]:
    """Deterministic zero-mean brightness texture, smooth at the scale of a few cells."""
    if amplitude <= 0.0:
        return np.zeros(shape, dtype=np.float64)
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(-1.0, 1.0, size=(shape[0] // 4 + 2, shape[1] // 4 + 2))
    fine = np.kron(coarse, np.ones((4, 4)))[: shape[0], : shape[1]]
    return amplitude * fine
