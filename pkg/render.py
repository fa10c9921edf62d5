"""Static image of a sample with its predicted trajectories"""

import logging
from typing import Optional

import cv2
import numpy as np

from scene.raster import RasterSample

logger = logging.getLogger(__name__)

# BGR
BACKGROUND = (255, 255, 255)
DRIVABLE = (235, 206, 135)
BOUNDARY = (170, 120, 60)
LANES = (80, 175, 76)
CROSSING = (60, 20, 220)
TRACK = (0, 0, 0)
MODE_PALETTE = (
    (0, 140, 255),
    (180, 40, 160),
    (0, 200, 200),
    (255, 0, 255),
    (120, 120, 0),
    (40, 40, 140),
    (200, 90, 255),
    (0, 90, 30),
)


def _to_pixels(uv: np.ndarray, scale: int) -> np.ndarray:
    return np.round(np.asarray(uv, dtype=np.float64) * scale).astype(np.int32).reshape(-1, 1, 2)


def render_sample(sample: RasterSample, mu: Optional[np.ndarray] = None, scale: int = 4) -> np.ndarray:
    """Draw ``sample`` and the modes ``mu`` [M, T, 2] (grid frame).

    Returns:
        np.ndarray: uint8 BGR image of (H*scale, W*scale, 3).
    """
    height, width = sample.grid_shape
    cells = np.empty((height, width, 3), dtype=np.uint8)
    cells[...] = BACKGROUND
    layers = (
        (sample.static[..., 0], DRIVABLE),
        (sample.static[..., 3], BOUNDARY),
        (sample.static[..., 1] | sample.static[..., 2], LANES),
        (sample.static[..., 4], CROSSING),
    )
    for mask, color in layers:
        cells[mask.astype(bool)] = color
    image = np.ascontiguousarray(np.repeat(np.repeat(cells, scale, axis=0), scale, axis=1))

    history = np.asarray(sample.history, dtype=np.float64)
    if len(history):
        cv2.polylines(image, [_to_pixels(history, scale)], False, TRACK, 1, cv2.LINE_8)
        u, v = history[-1]
        cv2.circle(image, (int(round(u * scale)), int(round(v * scale))), max(2, scale // 2), TRACK, -1, cv2.LINE_8)

    if mu is not None:
        for m, trajectory in enumerate(np.asarray(mu)):
            color = MODE_PALETTE[m % len(MODE_PALETTE)]
            start = history[-1:] if len(history) else trajectory[:1]
            points = np.concatenate([start, trajectory])
            cv2.polylines(image, [_to_pixels(points, scale)], False, color, 1, cv2.LINE_8)
    return image


def write_image(image: np.ndarray, path: str):
    """Write a binary portable pixel map"""
    ok, buffer = cv2.imencode(".ppm", image)
    if not ok:
        raise OSError(f"could not encode image for {path}")
    try:
        with open(path, "wb") as f:
            f.write(buffer.tobytes())
    except OSError as e:
        logger.error(f"Error writing image {path}: {e}")
        raise
    logger.info(f"Saved {image.shape[1]}x{image.shape[0]} image to {path}")
