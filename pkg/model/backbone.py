"""Raster encoder producing the multi-scale scene encodings.

Static maps go through a strided convolution stack, one map per level.
Dynamic maps are encoded per time step and folded by a convolutional GRU;
its final hidden state is downsampled to every level. The two branches are
fused per level by a 1x1 convolution. Levels are ordered coarse to fine.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from autograd import ops
from autograd.conv import conv_output_extent
from autograd.nn import Conv2d, Module
from autograd.tensor import ShapeError, Tensor
from config import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class FeaturePyramid:
    levels: List[Tensor]

    @property
    def level_shapes(self) -> List[Tuple[int, int]]:
        return [tuple(level.shape[-2:]) for level in self.levels]


def level_shapes(height: int, width: int, strides: Sequence[int]) -> List[Tuple[int, int]]:
    """Spatial extents per level, coarse to fine, for 3x3 stride-2 convolutions."""
    shapes = []
    h, w, s = height, width, 1
    for stride in strides:
        while s < stride:
            h, w, s = conv_output_extent(h, 3, 2, 1), conv_output_extent(w, 3, 2, 1), s * 2
        shapes.append((h, w))
    return shapes[::-1]


def validate_strides(height: int, width: int, strides: Sequence[int]):
    if not strides:
        raise ConfigError("at least one pyramid level is required")
    if any(b != 2 * a for a, b in zip(strides, strides[1:])):
        raise ShapeError(f"strides {tuple(strides)} must double from level to level")
    first = strides[0]
    if first < 2 or first & (first - 1):
        raise ShapeError(f"first stride {first} must be a power of two")
    if height % first or width % first:
        raise ShapeError(f"grid {height}x{width} is not divisible by the first stride {first}")


class ConvGRUCell(Module):
    """Convolutional GRU with 3x3 gates"""

    def __init__(self, in_channels: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.gates = Conv2d(in_channels + hidden, 2 * hidden, 3, rng)
        self.candidate = Conv2d(in_channels + hidden, hidden, 3, rng)

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        zr = ops.sigmoid(self.gates(ops.concat([x, h], axis=1)))
        z = zr[:, : self.hidden]
        r = zr[:, self.hidden :]
        n = ops.tanh(self.candidate(ops.concat([x, r * h], axis=1)))
        return (1.0 - z) * n + z * h


class Backbone(Module):
    def __init__(
        self,
        static_channels: int,
        dynamic_channels: int,
        d_model: int,
        strides: Sequence[int],
        gru_hidden: int,
        rng: np.random.Generator,
    ):
        if d_model <= 0:
            raise ConfigError(f"d_model must be positive, got {d_model}")
        self.strides = tuple(strides)
        self.d_model = d_model
        stem_convs = int(np.log2(self.strides[0]))

        self.static_stem = [
            Conv2d(static_channels if i == 0 else d_model, d_model, 3, rng, stride=2) for i in range(stem_convs)
        ]
        self.static_levels = [
            [Conv2d(d_model, d_model, 3, rng, stride=1 if i == 0 else 2), Conv2d(d_model, d_model, 3, rng)]
            for i in range(len(self.strides))
        ]

        self.dynamic_stem = [
            Conv2d(dynamic_channels if i == 0 else gru_hidden, gru_hidden, 3, rng, stride=2) for i in range(stem_convs)
        ]
        self.gru = ConvGRUCell(gru_hidden, gru_hidden, rng)
        self.dynamic_down = [Conv2d(gru_hidden, gru_hidden, 3, rng, stride=2) for _ in self.strides[1:]]

        self.fuse_convs = [Conv2d(d_model + gru_hidden, d_model, 1, rng) for _ in self.strides]

    def encode_static(self, static: Tensor) -> List[Tensor]:
        """[B, F_s, H, W] -> per-level maps, fine to coarse."""
        x = static
        for conv in self.static_stem:
            x = ops.relu(conv(x))
        levels = []
        for down, conv in self.static_levels:
            x = ops.relu(conv(ops.relu(down(x))))
            levels.append(x)
        return levels

    def encode_dynamic(self, dynamic: Tensor) -> List[Tensor]:
        """[B, T_i, F_d, H, W] -> per-level maps, fine to coarse."""
        if dynamic.ndim != 5:
            raise ShapeError(f"dynamic raster must be [B, T_i, F_d, H, W], got {dynamic.shape}")
        steps = dynamic.shape[1]
        if steps == 0:
            raise ConfigError("dynamic raster has no time steps")
        h = None
        for t in range(steps):
            x = dynamic[:, t]
            for conv in self.dynamic_stem:
                x = ops.relu(conv(x))
            if h is None:
                h = Tensor(np.zeros(x.shape[:1] + (self.gru.hidden,) + x.shape[2:], dtype=x.dtype))
            h = self.gru(x, h)
        levels = [h]
        for conv in self.dynamic_down:
            levels.append(ops.relu(conv(levels[-1])))
        return levels

    def fuse(self, static_levels: List[Tensor], dynamic_levels: List[Tensor]) -> FeaturePyramid:
        if len(static_levels) != len(dynamic_levels):
            raise ShapeError(f"{len(static_levels)} static levels vs {len(dynamic_levels)} dynamic levels")
        fused = []
        for conv, s, d in zip(self.fuse_convs, static_levels, dynamic_levels):
            if s.shape[-2:] != d.shape[-2:]:
                raise ShapeError(f"level shape mismatch {s.shape[-2:]} vs {d.shape[-2:]}")
            fused.append(conv(ops.concat([s, d], axis=1)))
        return FeaturePyramid(fused[::-1])

    def forward(self, static: Tensor, dynamic: Tensor) -> FeaturePyramid:
        return self.fuse(self.encode_static(static), self.encode_dynamic(dynamic))
