"""Random rigid augmentation of raster samples.

A single resampling pass applies the rotation about the ego position and the
translation together. Rotation angles are counter-clockwise in the metric
frame; translations are (columns, rows) in grid cells.
"""

import logging
import math
from dataclasses import replace
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from scene.raster import HEADING, VECTOR_PAIRS, WIDTH, RasterSample

logger = logging.getLogger(__name__)

MAX_ROTATION = math.radians(60.0)
MAX_SHIFT = 3.0
PROBABILITY = 0.75


def grid_rotation(theta: float) -> np.ndarray:
    """Matrix acting on grid-frame (u, v) offsets; v points down."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def transform_points(uv: np.ndarray, anchor: np.ndarray, theta: float, shift: np.ndarray) -> np.ndarray:
    rot = grid_rotation(theta)
    return (uv - anchor) @ rot.T + anchor + shift


def _source_coordinates(shape, anchor, theta, shift) -> np.ndarray:
    """Array indices (row, col) each output cell samples from."""
    height, width = shape
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    q = np.stack([cols + 0.5, rows + 0.5], axis=-1)
    # inverse of a rotation is its transpose
    p = (q - anchor - shift) @ grid_rotation(theta) + anchor
    return np.stack([p[..., 1] - 0.5, p[..., 0] - 0.5])


def _resample(channel: np.ndarray, coords: np.ndarray, order: int) -> np.ndarray:
    out = ndimage.map_coordinates(channel.astype(np.float64), coords, order=order, mode="constant", cval=0.0)
    return out.astype(channel.dtype)


def apply_transform(sample: RasterSample, theta: float, shift: Tuple[float, float]) -> RasterSample:
    """Rotate by ``theta`` about the ego position, then translate by ``shift``."""
    height, width = sample.grid_shape
    anchor = np.array([sample.ego_cell[1], sample.ego_cell[0]], dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    coords = _source_coordinates((height, width), anchor, theta, shift)

    static = np.stack([_resample(sample.static[..., c], coords, 0) for c in range(sample.static.shape[-1])], axis=-1)
    drivable = _resample(sample.drivable_mask, coords, 0)

    steps, channels = sample.dynamic.shape[0], sample.dynamic.shape[-1]
    dynamic = np.empty_like(sample.dynamic)
    for t in range(steps):
        for c in range(channels):
            order = 0 if c == HEADING else 1
            dynamic[t, ..., c] = _resample(sample.dynamic[t, ..., c], coords, order)

    c, s = math.cos(theta), math.sin(theta)
    for i, j in VECTOR_PAIRS:
        x, y = dynamic[..., i].copy(), dynamic[..., j].copy()
        dynamic[..., i] = c * x - s * y
        dynamic[..., j] = s * x + c * y
    occupied = dynamic[..., WIDTH] > 0
    heading = np.mod(dynamic[..., HEADING].astype(np.float64) + theta, 2 * math.pi)
    dynamic[..., HEADING] = np.where(occupied, heading, 0.0)

    gt = transform_points(sample.gt.astype(np.float64), anchor, theta, shift).astype(sample.gt.dtype)
    history = transform_points(sample.history.astype(np.float64), anchor, theta, shift).astype(sample.history.dtype)
    ego_cell = sample.ego_cell + shift[::-1]
    return replace(
        sample,
        static=static,
        dynamic=dynamic,
        drivable_mask=drivable,
        gt=gt,
        ego_cell=ego_cell,
        history=history,
    )


def augment(
    sample: RasterSample,
    rng: np.random.Generator,
    theta: Optional[float] = None,
    shift: Optional[Tuple[float, float]] = None,
    probability: float = PROBABILITY,
) -> RasterSample:
    """Randomly rotate and translate ``sample`` (jointly, with ``probability``).

    Args:
        sample: Input sample, left untouched.
        rng: Source of the coin flip and the transform parameters.
        theta: Force this rotation in radians; skips the coin flip.
        shift: Force this (columns, rows) translation; skips the coin flip.
        probability: Chance of transforming when nothing is forced.

    Returns:
        RasterSample: The transformed sample, or ``sample`` itself.
    """
    if theta is None and shift is None:
        if rng.random() >= probability:
            return sample
        theta = rng.uniform(-MAX_ROTATION, MAX_ROTATION)
        shift = tuple(rng.uniform(-MAX_SHIFT, MAX_SHIFT, size=2))
    theta = 0.0 if theta is None else float(theta)
    shift = (0.0, 0.0) if shift is None else shift
    logger.debug(f"augment theta={math.degrees(theta):.1f} shift=({shift[0]:.2f}, {shift[1]:.2f})")
    return apply_transform(sample, theta, shift)
