"""Grid geometry shared by the generator, rasterizer and augmenter.

Grid frame: continuous (u, v) = (column, row) in cell units, cell (r, c)
covering [c, c+1) x [r, r+1). The ego frame is metric with x to the right
and y forward; the ego sits at (u, v) = (ego_col, ego_row) with heading up.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class GridConfig:
    height: int = 152
    width: int = 96
    resolution: float = 1.0
    ego_row: int = 122
    ego_col: int = 48

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.resolution <= 0:
            raise ValueError(f"invalid grid {self}")
        if not (0 <= self.ego_row < self.height and 0 <= self.ego_col < self.width):
            raise ValueError(f"ego anchor ({self.ego_row}, {self.ego_col}) outside grid")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.height, self.width

    def to_grid(self, xy: np.ndarray) -> np.ndarray:
        """Metric ego-frame points [..., 2] -> grid-frame (u, v)."""
        xy = np.asarray(xy, dtype=np.float64)
        u = self.ego_col + xy[..., 0] / self.resolution
        v = self.ego_row - xy[..., 1] / self.resolution
        return np.stack([u, v], axis=-1)

    def to_metric(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=np.float64)
        x = (uv[..., 0] - self.ego_col) * self.resolution
        y = (self.ego_row - uv[..., 1]) * self.resolution
        return np.stack([x, y], axis=-1)

    def cell_centers(self) -> np.ndarray:
        """Grid-frame centers of all cells, [H, W, 2] as (u, v)."""
        rows, cols = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        return np.stack([cols + 0.5, rows + 0.5], axis=-1)

    def metric_extent(self, margin: float = 0.0) -> Tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) in meters, shrunk by ``margin``."""
        x_min = -self.ego_col * self.resolution + margin
        x_max = (self.width - self.ego_col) * self.resolution - margin
        y_min = -(self.height - self.ego_row) * self.resolution + margin
        y_max = self.ego_row * self.resolution - margin
        return x_min, x_max, y_min, y_max


FULL_GRID = GridConfig(152, 96, 1.0, 122, 48)
DESK_GRID = GridConfig(76, 48, 1.0, 61, 24)
