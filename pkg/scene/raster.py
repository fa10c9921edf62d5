"""Rasterization of scenes into static and dynamic BEV grids"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np
from matplotlib.path import Path
from scipy import ndimage

from scene.grid import FULL_GRID, GridConfig
from scene.synth import SceneSpec

logger = logging.getLogger(__name__)

# Frozen channel orders. "length" is the footprint extent along the heading.
STATIC_CHANNELS = ("drivable", "center_lines", "driving_lanes", "road_boundaries", "crossings")
DYNAMIC_CHANNELS = ("vel_x", "vel_y", "acc_x", "acc_y", "offset_x", "offset_y", "length", "width", "heading")
HEADING = DYNAMIC_CHANNELS.index("heading")
WIDTH = DYNAMIC_CHANNELS.index("width")
LENGTH = DYNAMIC_CHANNELS.index("length")
VECTOR_PAIRS = ((0, 1), (2, 3), (4, 5))

# Fixed-point bits for sub-cell polyline vertices.
_SHIFT = 4


@dataclass
class RasterSample:
    """One example in grid form.

    Attributes:
        static: [H, W, 5] uint8 in {0, 1}.
        dynamic: [T_i, H, W, 9] float32.
        drivable_mask: [H, W] uint8.
        gt: [T_o, 2] float32 grid-frame (u, v) future positions.
        ego_cell: (row, col) of the ego position, float64.
        history: [T_i, 2] float32 grid-frame past ego positions.
        resolution: Meters per cell.
    """

    static: np.ndarray
    dynamic: np.ndarray
    drivable_mask: np.ndarray
    gt: np.ndarray
    ego_cell: np.ndarray
    history: np.ndarray
    resolution: float = 1.0

    @property
    def grid_shape(self):
        return self.static.shape[:2]

    def equals(self, other: "RasterSample") -> bool:
        """Field-for-field bitwise equality."""
        return all(
            a.dtype == b.dtype and a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.arrays(), other.arrays())
        ) and self.resolution == other.resolution

    def arrays(self):
        return (self.static, self.dynamic, self.drivable_mask, self.gt, self.ego_cell, self.history)


def fill_polygons(polygons, grid: GridConfig) -> np.ndarray:
    """Cells whose center lies inside any polygon."""
    mask = np.zeros(grid.shape, dtype=bool)
    centers = grid.cell_centers().reshape(-1, 2)
    for poly in polygons:
        inside = Path(grid.to_grid(poly)).contains_points(centers)
        mask |= inside.reshape(grid.shape)
    return mask


def draw_polylines(polylines, grid: GridConfig) -> np.ndarray:
    """One-cell-wide lines through the cells each polyline crosses."""
    canvas = np.zeros(grid.shape, dtype=np.uint8)
    scale = 1 << _SHIFT
    for line in polylines:
        # cv2 puts pixel centers on integer coordinates
        uv = grid.to_grid(line) - 0.5
        pts = np.round(uv * scale).astype(np.int32).reshape(-1, 1, 2)
        cv2.polylines(canvas, [pts], False, 1, thickness=1, lineType=cv2.LINE_8, shift=_SHIFT)
    return canvas.astype(bool)


def footprint_cells(x: float, y: float, heading: float, length: float, width: float, grid: GridConfig):
    """Row/col indices of cells whose center lies in an oriented box.

    The cell containing the box center is always included. Returns the
    in-grid indices and how many cells were clipped.
    """
    radius = 0.5 * math.hypot(length, width) / grid.resolution + 1
    u, v = grid.to_grid(np.array([x, y]))
    r0, r1 = int(math.floor(v - radius)), int(math.ceil(v + radius))
    c0, c1 = int(math.floor(u - radius)), int(math.ceil(u + radius))
    rows, cols = np.meshgrid(np.arange(r0, r1 + 1), np.arange(c0, c1 + 1), indexing="ij")
    centers = grid.to_metric(np.stack([cols + 0.5, rows + 0.5], axis=-1))
    d = centers - np.array([x, y])
    along = d[..., 0] * math.cos(heading) + d[..., 1] * math.sin(heading)
    across = -d[..., 0] * math.sin(heading) + d[..., 1] * math.cos(heading)
    inside = (np.abs(along) <= length / 2) & (np.abs(across) <= width / 2)
    inside |= (rows == math.floor(v)) & (cols == math.floor(u))
    rows, cols = rows[inside], cols[inside]
    in_grid = (rows >= 0) & (rows < grid.height) & (cols >= 0) & (cols < grid.width)
    return rows[in_grid], cols[in_grid], int((~in_grid).sum())


def rasterize(scene: SceneSpec, grid: Optional[GridConfig] = None) -> RasterSample:
    """Render ``scene`` onto ``grid`` (ego anchored, heading up).

    Args:
        scene: Scene in the ego frame.
        grid: Target grid, FULL_GRID by default.

    Returns:
        RasterSample: Static maps, per-step agent features and the future.
    """
    grid = grid or FULL_GRID
    height, width = grid.shape
    static = np.zeros((height, width, len(STATIC_CHANNELS)), dtype=np.uint8)
    drivable = fill_polygons(scene.drivable, grid)
    static[..., 0] = drivable
    static[..., 1] = draw_polylines(scene.lanes, grid)
    static[..., 2] = draw_polylines(scene.lane_edges, grid)
    static[..., 3] = drivable & ~ndimage.binary_erosion(drivable, border_value=1)
    static[..., 4] = fill_polygons(scene.crossings, grid)

    dynamic = np.zeros((scene.history_steps, height, width, len(DYNAMIC_CHANNELS)), dtype=np.float32)
    clipped = 0
    # ego last so it wins where footprints overlap
    order = [i for i in range(len(scene.agents)) if i != scene.ego_index]
    if scene.ego_index >= 0:
        order.append(scene.ego_index)
    for i in order:
        agent = scene.agents[i]
        for t in range(scene.history_steps):
            x, y, heading = agent.poses[t]
            rows, cols, lost = footprint_cells(x, y, heading, agent.length, agent.width, grid)
            clipped += lost
            if not len(rows):
                continue
            centers = grid.to_metric(np.stack([cols + 0.5, rows + 0.5], axis=-1))
            feats = dynamic[t, rows, cols]
            feats[:, 0:2] = agent.velocity[t]
            feats[:, 2:4] = agent.acceleration[t]
            feats[:, 4:6] = np.array([x, y]) - centers
            feats[:, LENGTH] = agent.length
            feats[:, WIDTH] = agent.width
            feats[:, HEADING] = heading % (2 * math.pi)
            dynamic[t, rows, cols] = feats
    if clipped:
        logger.debug(f"clipped {clipped} agent cells outside the grid")

    if scene.ego_index >= 0:
        history = grid.to_grid(scene.ego.poses[:, :2]).astype(np.float32)
    else:
        history = np.tile(np.array([grid.ego_col, grid.ego_row], dtype=np.float32), (scene.history_steps, 1))

    return RasterSample(
        static=static,
        dynamic=dynamic,
        drivable_mask=drivable.astype(np.uint8),
        gt=grid.to_grid(scene.gt_future).astype(np.float32),
        ego_cell=np.array([grid.ego_row, grid.ego_col], dtype=np.float64),
        history=history,
        resolution=grid.resolution,
    )
