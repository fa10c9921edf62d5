"""Recurrent trajectory decoder.

Each step runs the cross-attention stack, turns the output queries into a
chunk of waypoints and feeds both back: the output queries become the next
temporal queries and the last waypoint becomes the next reference point.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from autograd import ops
from autograd.nn import FeedForward, Linear, Module, Parameter, uniform_fan_in
from autograd.tensor import Tensor
from config import ConfigError
from model.backbone import FeaturePyramid
from model.deform_attn import CrossAttentionStack

logger = logging.getLogger(__name__)


class InputError(ValueError):
    """Decoder inputs are outside the grid they refer to."""


@dataclass
class QueryState:
    """Recurrent decoder state.

    Attributes:
        temporal_q: [B, M, d] per-mode queries.
        mode_q: [M, d] learnable mode embeddings, None when disabled.
        ref_points: [B, M, 2] normalized (x, y) reference points.
    """

    temporal_q: Tensor
    mode_q: Optional[Tensor]
    ref_points: Tensor


@dataclass
class TrajectoryPrediction:
    """Multi-modal output in grid-frame cells.

    Attributes:
        mu: [B, M, T_o, 2] Laplace locations (u, v).
        b: [B, M, T_o, 2] positive Laplace scales.
        pi: [B, M] mode probabilities.
    """

    mu: Tensor
    b: Tensor
    pi: Tensor

    @property
    def modes(self) -> int:
        return self.mu.shape[1]


class RecurrentDecoder(Module):
    def __init__(
        self,
        d_model: int,
        modes: int,
        heads: int,
        levels: int,
        points: int,
        layers: int,
        recurrent_steps: int,
        chunk: int,
        future_steps: int,
        grid_shape: Tuple[int, int],
        rng: np.random.Generator,
        mode_queries: bool = True,
        ego_position: bool = True,
        scale_eps: float = 1e-3,
    ):
        if recurrent_steps * chunk != future_steps:
            raise ConfigError(f"{recurrent_steps} steps x {chunk} waypoints != {future_steps} future steps")
        self.d_model, self.modes = d_model, modes
        self.recurrent_steps, self.chunk = recurrent_steps, chunk
        self.height, self.width = grid_shape
        self.scale_eps = scale_eps

        self.temporal_init = Parameter(uniform_fan_in((d_model,), d_model, rng))
        # always drawn; later weights are independent of mode_queries
        mode_init = rng.normal(0.0, 1.0, size=(modes, d_model))
        self.mode_q = Parameter(mode_init) if mode_queries else None
        self.stack = CrossAttentionStack(d_model, heads, levels, points, layers, rng)
        self.traj_head = FeedForward(d_model, d_model, chunk * 4, rng)
        self.mode_head = Linear(d_model, 1, rng)
        # learned reference points: per mode from mode_q, else one shared point
        self.ref_head = Linear(d_model, 2, rng) if not ego_position and mode_queries else None
        self.ref_logit = Parameter(np.zeros(2)) if not ego_position and not mode_queries else None

    def init_state(self, batch: int, ego_cells: np.ndarray) -> QueryState:
        """Initial queries and reference points.

        Args:
            batch: Batch size B.
            ego_cells: [B, 2] ego (row, col) with row < H and col < W; ignored
                when reference points are learned.

        Returns:
            QueryState: Every mode starts at the ego position.

        Raises:
            InputError: The ego cell lies outside the grid.
        """
        dtype = self.temporal_init.dtype
        temporal = ops.broadcast_to(self.temporal_init, (batch, self.modes, self.d_model))
        if self.ref_head is not None:
            learned = ops.sigmoid(self.ref_head(self.mode_q))
            return QueryState(temporal, self.mode_q, ops.broadcast_to(learned, (batch, self.modes, 2)))
        if self.ref_logit is not None:
            learned = ops.sigmoid(self.ref_logit)
            return QueryState(temporal, None, ops.broadcast_to(learned, (batch, self.modes, 2)))

        ego_cells = np.asarray(ego_cells, dtype=np.float64).reshape(batch, 2)
        rows, cols = ego_cells[:, 0], ego_cells[:, 1]
        if ((rows < 0) | (rows >= self.height) | (cols < 0) | (cols >= self.width)).any():
            raise InputError(f"ego cells {ego_cells.tolist()} outside grid {self.height}x{self.width}")
        ref = np.stack([cols / self.width, rows / self.height], axis=-1)
        ref = np.broadcast_to(ref[:, None, :], (batch, self.modes, 2)).astype(dtype)
        return QueryState(temporal, self.mode_q, Tensor(ref, dtype=dtype))

    def decode_step(
        self, state: QueryState, pyramid: FeaturePyramid, pos: Optional[Sequence[np.ndarray]] = None
    ) -> Tuple[Tensor, Tensor, QueryState]:
        """One recurrent step.

        Returns:
            tuple: chunk mu [B, M, T_c, 2], chunk b [B, M, T_c, 2] and the
            next state.
        """
        out = self.stack(state.temporal_q, state.mode_q, state.ref_points, pyramid, pos)
        b_, m, _ = out.shape
        raw = self.traj_head(out).reshape(b_, m, self.chunk, 4)
        scale = np.array([self.width, self.height], dtype=out.dtype)
        anchor = (state.ref_points * scale).reshape(b_, m, 1, 2)
        mu = anchor + ops.cumsum(raw[..., :2], axis=2)
        b = ops.softplus(raw[..., 2:]) + self.scale_eps
        next_ref = ops.clip(mu[:, :, -1] / scale, 0.0, 1.0)
        return mu, b, replace(state, temporal_q=out, ref_points=next_ref)

    def recurrent_decode(
        self, state: QueryState, pyramid: FeaturePyramid, pos: Optional[Sequence[np.ndarray]] = None
    ) -> TrajectoryPrediction:
        mus, bs = [], []
        for _ in range(self.recurrent_steps):
            mu, b, state = self.decode_step(state, pyramid, pos)
            mus.append(mu)
            bs.append(b)
        logits = self.mode_head(state.temporal_q)
        pi = ops.softmax(logits.reshape(logits.shape[0], self.modes), axis=-1)
        return TrajectoryPrediction(ops.concat(mus, axis=2), ops.concat(bs, axis=2), pi)

    def forward(self, pyramid: FeaturePyramid, ego_cells: np.ndarray, pos=None) -> TrajectoryPrediction:
        batch = pyramid.levels[0].shape[0]
        return self.recurrent_decode(self.init_state(batch, ego_cells), pyramid, pos)
