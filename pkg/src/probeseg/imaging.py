"""
Image containers and low-level image operations.

Conventions used throughout the package:

- RGB and HSV images are channel-last ``(H, W, 3)`` float arrays in [0, 1].
- Depth maps and grids are ``(H, W)`` float arrays.
- Binary masks are ``(H, W)`` bool arrays; label maps are ``(H, W)`` int arrays.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from PIL import Image, UnidentifiedImageError
from scipy import ndimage
from skimage.color import rgb2hsv
from skimage.measure import block_reduce
from skimage.segmentation import felzenszwalb as _sk_felzenszwalb

from probeseg.exceptions import FileWriteError, ImageFormatError, ShapeMismatchError

logger = logging.getLogger(__name__)

ImageRGB = NDArray[np.float64]
DepthMap = NDArray[np.float64]
Grid = NDArray[np.float64]
BinaryMask = NDArray[np.bool_]
LabelMap = NDArray[np.int64]

POOL_FACTOR = 3
DEPTH_FAR_PLANE = 5.0
DEPTH_LEVELS = 65535

SUPERPIXEL_SCALE = 300.0
SUPERPIXEL_SIGMA = 0.8
SUPERPIXEL_MIN_SIZE = 60


def rgb_to_hsv(img: ImageRGB) -> ImageRGB:
    """Hexcone HSV with hue scaled to [0, 1]; zero-saturation pixels get hue 0."""
    return np.asarray(rgb2hsv(np.clip(img, 0.0, 1.0)), dtype=np.float64)


def hsv_diff(a: ImageRGB, b: ImageRGB) -> ImageRGB:
    """
    Difference ``a - b`` of two HSV images.

    Saturation and value subtract componentwise. Hue is circular: the result is the
    shorter arc, signed, so its magnitude never exceeds 0.5.
    """
    if a.shape != b.shape:
        raise ShapeMismatchError(
            "HSV images must have equal shapes", details=f"{a.shape} vs {b.shape}"
        )
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    dh = diff[..., 0]
    wrapped = np.mod(dh + 0.5, 1.0) - 0.5
    # mod maps +0.5 to -0.5; keep the sign of the raw difference on the tie
    wrapped = np.where(np.isclose(np.abs(wrapped), 0.5), np.sign(dh) * 0.5, wrapped)
    diff[..., 0] = wrapped
    return diff


def mean_pool(img: NDArray[np.float64], factor: int = POOL_FACTOR) -> NDArray[np.float64]:
    """Mean over non-overlapping ``factor x factor`` blocks; trailing axes are channels."""
    height, width = img.shape[:2]
    if height % factor or width % factor:
        raise ShapeMismatchError(
            f"Image dimensions must be divisible by {factor}",
            details=f"got {height}x{width}",
        )
    block = (factor, factor) + (1,) * (img.ndim - 2)
    return np.asarray(block_reduce(img, block_size=block, func=np.mean), dtype=np.float64)


def majority_downsample(mask: BinaryMask, factor: int = POOL_FACTOR) -> BinaryMask:
    """A cell is on iff a strict majority of its ``factor x factor`` pixels are on."""
    counts = mean_pool(mask.astype(np.float64), factor) * factor * factor
    return np.asarray(counts > (factor * factor) / 2.0)


def nearest_upsample(mask: NDArray, factor: int = POOL_FACTOR) -> NDArray:
    return np.repeat(np.repeat(mask, factor, axis=0), factor, axis=1)


def gaussian_kernel5() -> Grid:
    """The unnormalized 5x5 kernel ``exp(-u^2 - v^2)`` for ``u, v`` in -2..2."""
    u, v = np.mgrid[-2:3, -2:3]
    return np.exp(-(u**2) - v**2).astype(np.float64)


def convolve5(grid: Grid, kernel: Grid | None = None) -> Grid:
    """Same-size convolution with zero padding. The kernel is symmetric."""
    if kernel is None:
        kernel = gaussian_kernel5()
    if kernel.shape != (5, 5):
        raise ShapeMismatchError("Kernel must be 5x5", details=f"got {kernel.shape}")
    return np.asarray(
        ndimage.correlate(np.asarray(grid, dtype=np.float64), kernel, mode="constant", cval=0.0)
    )


def felzenszwalb(
    img: ImageRGB,
    k: float = SUPERPIXEL_SCALE,
    sigma: float = SUPERPIXEL_SIGMA,
    min_size: int = SUPERPIXEL_MIN_SIZE,
) -> LabelMap:
    """
    Graph-based superpixels on an 8-connected pixel graph.

    ``k`` is on the 0-255 color scale of the reference implementation; scikit-image
    rescales it internally for float images. Labels are contiguous from 0.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if min_size < 1:
        raise ValueError(f"min_size must be >= 1, got {min_size}")
    labels = _sk_felzenszwalb(
        np.clip(img, 0.0, 1.0), scale=k, sigma=sigma, min_size=int(min_size), channel_axis=-1
    )
    # Already contiguous; re-index anyway so the partition invariant never depends on it
    _, contiguous = np.unique(labels, return_inverse=True)
    return contiguous.reshape(labels.shape).astype(np.int64)


# --- raster I/O -----------------------------------------------------------


def _save(array: NDArray, path: Path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(array).save(path, format="PNG")
    except OSError as e:
        raise FileWriteError(f"Cannot write image {path}", details=str(e))


def _load(path: Path) -> NDArray:
    path = Path(path)
    if not path.exists():
        raise ImageFormatError(f"Image file '{path}' does not exist")
    try:
        with Image.open(path) as im:
            im.load()
            return np.array(im)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise ImageFormatError(f"Cannot decode image {path}", details=str(e))


def encode_rgb(img: ImageRGB, path: Path) -> None:
    """Store an RGB image as an 8-bit-per-channel PNG."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeMismatchError("RGB image must be HxWx3", details=f"got {img.shape}")
    quantized = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    _save(quantized, path)


def decode_rgb(path: Path) -> ImageRGB:
    raw = _load(path)
    if raw.ndim != 3 or raw.shape[2] < 3 or raw.dtype != np.uint8:
        raise ImageFormatError(
            f"{path} is not an 8-bit RGB image", details=f"shape={raw.shape} dtype={raw.dtype}"
        )
    return raw[..., :3].astype(np.float64) / 255.0


def quantize_depth(depth: DepthMap) -> NDArray[np.uint16]:
    """Linear map 0..5 m onto 0..65535."""
    scaled = np.clip(depth, 0.0, DEPTH_FAR_PLANE) / DEPTH_FAR_PLANE * DEPTH_LEVELS
    return np.round(scaled).astype(np.uint16)


def encode_mask(mask: BinaryMask, path: Path) -> None:
    """Store a binary mask as an 8-bit grayscale PNG (0 or 255)."""
    if mask.ndim != 2:
        raise ShapeMismatchError("Mask must be HxW", details=f"got {mask.shape}")
    _save(np.where(mask, 255, 0).astype(np.uint8), path)


def encode_depth(depth: DepthMap, path: Path) -> None:
    """Store a depth map as a 16-bit grayscale PNG."""
    if depth.ndim != 2:
        raise ShapeMismatchError("Depth map must be HxW", details=f"got {depth.shape}")
    _save(quantize_depth(depth), path)


def decode_depth(path: Path) -> DepthMap:
    raw = _load(path)
    if raw.ndim != 2:
        raise ImageFormatError(f"{path} is not a grayscale depth image", details=f"{raw.shape}")
    return raw.astype(np.float64) / DEPTH_LEVELS * DEPTH_FAR_PLANE
