"""Multi-scale deformable attention, the fusion encoder and the cross-attention stack.

Normalized coordinates are (x, y) = (u / W, v / H) in the grid frame of the
level being sampled, so one reference point addresses the same physical
location on every level.
"""

import logging
import math
from collections import Counter
from typing import List, Optional, Sequence, Tuple

import numpy as np

from autograd import ops
from autograd.nn import LayerNorm, Linear, Module, Parameter, FeedForward, xavier_uniform
from autograd.sampling import bilinear_sample
from autograd.tensor import Tensor
from config import ConfigError
from model.backbone import FeaturePyramid

logger = logging.getLogger(__name__)

TEMPERATURE = 10000.0


def positional_embedding(level_shapes: Sequence[Tuple[int, int]], d: int, dtype=np.float32) -> List[np.ndarray]:
    """Fixed sine/cosine maps [d, H_l, W_l], one per level.

    The first d/2 channels encode the row, the rest the column; each half
    interleaves sin and cos over geometric frequencies. Positions are the
    cell index scaled by 2*pi / extent.
    """
    if d <= 0 or d % 4:
        raise ConfigError(f"positional embedding width must be a positive multiple of 4, got {d}")
    npf = d // 2
    k = np.arange(npf)
    dim_t = TEMPERATURE ** (2 * (k // 2) / npf)
    maps = []
    for height, width in level_shapes:
        rows = np.arange(height, dtype=np.float64) / height * 2 * math.pi
        cols = np.arange(width, dtype=np.float64) / width * 2 * math.pi
        pos_r = rows[:, None] / dim_t
        pos_c = cols[:, None] / dim_t
        pos_r = np.where(k % 2 == 0, np.sin(pos_r), np.cos(pos_r))
        pos_c = np.where(k % 2 == 0, np.sin(pos_c), np.cos(pos_c))
        emb = np.concatenate(
            [
                np.broadcast_to(pos_r.T[:, :, None], (npf, height, width)),
                np.broadcast_to(pos_c.T[:, None, :], (npf, height, width)),
            ]
        )
        maps.append(emb.astype(dtype))
    return maps


def reference_grid(height: int, width: int) -> np.ndarray:
    """Normalized centers of every cell of an H x W map, [H*W, 2] row-major."""
    rows, cols = np.meshgrid(
        (np.arange(height) + 0.5) / height, (np.arange(width) + 0.5) / width, indexing="ij"
    )
    return np.stack([cols.reshape(-1), rows.reshape(-1)], axis=-1)


def flatten_levels(levels: Sequence[Tensor]) -> Tensor:
    """[B, d, H_l, W_l] maps -> [B, sum H_l*W_l, d]"""
    flat = []
    for level in levels:
        b, d, h, w = level.shape
        flat.append(ops.transpose(level, (0, 2, 3, 1)).reshape(b, h * w, d))
    return ops.concat(flat, axis=1)


def unflatten_levels(flat: Tensor, shapes: Sequence[Tuple[int, int]]) -> List[Tensor]:
    levels, start = [], 0
    b, _, d = flat.shape
    for h, w in shapes:
        chunk = flat[:, start : start + h * w].reshape(b, h, w, d)
        levels.append(ops.transpose(chunk, (0, 3, 1, 2)))
        start += h * w
    return levels


class MSDeformAttn(Module):
    """Deformable attention over L levels with K sampling points per head and level.

    Sampling offsets and attention logits are linear in the query; the logits
    of one head are normalized jointly over its L*K samples.
    """

    def __init__(self, d_model: int, heads: int, levels: int, points: int, rng: np.random.Generator):
        if d_model % heads:
            raise ConfigError(f"d_model={d_model} not divisible by heads={heads}")
        self.d_model, self.heads, self.levels, self.points = d_model, heads, levels, points
        self.sampling_offsets = Linear(d_model, heads * levels * points * 2, rng)
        self.attention_weights = Linear(d_model, heads * levels * points, rng)
        self.value_proj = Linear(d_model, d_model, rng)
        self.output_proj = Linear(d_model, d_model, rng)
        self.clamp_count: Counter = Counter()
        self.reset_parameters(rng)

    def reset_parameters(self, rng: np.random.Generator, query_gain: float = 0.1):
        """Offsets start on a ring of ``heads`` directions around the reference.

        The query-dependent parts of offsets and logits start small but
        non-zero, so distinct queries sample distinct features from the
        first step.
        """
        d = self.d_model
        offsets = self.sampling_offsets.weight
        offsets.data[...] = query_gain * xavier_uniform(offsets.shape, d, offsets.shape[1], rng)
        thetas = np.arange(self.heads) * (2.0 * math.pi / self.heads)
        grid_init = np.stack([np.cos(thetas), np.sin(thetas)], -1)
        grid_init = grid_init / np.abs(grid_init).max(-1, keepdims=True)
        grid_init = np.tile(grid_init[:, None, None, :], (1, self.levels, self.points, 1))
        grid_init *= np.arange(1, self.points + 1)[None, None, :, None]
        self.sampling_offsets.bias.data[...] = grid_init.reshape(-1)
        logits = self.attention_weights.weight
        logits.data[...] = query_gain * xavier_uniform(logits.shape, d, logits.shape[1], rng)
        self.attention_weights.bias.data[...] = 0.0
        self.value_proj.weight.data[...] = xavier_uniform((d, d), d, d, rng)
        self.value_proj.bias.data[...] = 0.0
        self.output_proj.weight.data[...] = xavier_uniform((d, d), d, d, rng)
        self.output_proj.bias.data[...] = 0.0

    def attention(self, query: Tensor) -> Tensor:
        """Normalized weights [B, Q, heads, L, K]."""
        b, q, _ = query.shape
        logits = self.attention_weights(query).reshape(b, q, self.heads, self.levels * self.points)
        return ops.softmax(logits, axis=-1).reshape(b, q, self.heads, self.levels, self.points)

    def forward(self, query: Tensor, ref_points: Tensor, pyramid: Sequence[Tensor]) -> Tensor:
        """Attend from ``query`` [B, Q, d] around ``ref_points`` [B, Q, 2] into ``pyramid``.

        Args:
            query: Query embeddings.
            ref_points: Normalized (x, y); values outside [0, 1] are clamped.
            pyramid: Level maps [B, d, H_l, W_l], coarse to fine.

        Returns:
            Tensor: [B, Q, d] attended features.
        """
        if len(pyramid) != self.levels:
            raise ConfigError(f"attention built for {self.levels} levels, got {len(pyramid)}")
        b, q, d = query.shape
        heads, dh = self.heads, d // self.heads

        outside = int(np.count_nonzero((ref_points.data < 0.0) | (ref_points.data > 1.0)))
        if outside:
            self.clamp_count["ref_points"] += outside
            logger.debug(f"clamped {outside} reference coordinates into [0, 1]")
            ref_points = ops.clip(ref_points, 0.0, 1.0)

        shapes = [tuple(level.shape[-2:]) for level in pyramid]
        normalizer = np.array([[w, h] for h, w in shapes], dtype=query.dtype)
        offsets = self.sampling_offsets(query).reshape(b, q, heads, self.levels, self.points, 2)
        locations = ref_points.reshape(b, q, 1, 1, 1, 2) + offsets / normalizer[:, None, :]
        weights = self.attention(query)

        out = None
        for lvl, level in enumerate(pyramid):
            h, w = shapes[lvl]
            value = self.value_proj(ops.transpose(level, (0, 2, 3, 1)))
            value = ops.transpose(value.reshape(b, h, w, heads, dh), (0, 3, 4, 1, 2)).reshape(b * heads, dh, h, w)
            points = ops.transpose(locations[:, :, :, lvl], (0, 2, 1, 3, 4)).reshape(b * heads, q * self.points, 2)
            sampled = bilinear_sample(value, points).reshape(b, heads, q, self.points, dh)
            wl = ops.transpose(weights[:, :, :, lvl], (0, 2, 1, 3)).reshape(b, heads, q, self.points, 1)
            term = (sampled * wl).sum(axis=3)
            out = term if out is None else out + term
        out = ops.transpose(out, (0, 2, 1, 3)).reshape(b, q, d)
        return self.output_proj(out)


class EncoderLayer(Module):
    def __init__(self, d_model: int, heads: int, levels: int, points: int, rng: np.random.Generator):
        self.attn = MSDeformAttn(d_model, heads, levels, points, rng)
        self.norm1 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, 4 * d_model, d_model, rng)
        self.norm2 = LayerNorm(d_model)

    def forward(self, src: Tensor, pos: Tensor, ref: Tensor, shapes) -> Tensor:
        src2 = self.attn(src + pos, ref, unflatten_levels(src, shapes))
        src = self.norm1(src + src2)
        return self.norm2(src + self.ffn(src))


class FusionEncoder(Module):
    """Deformable self-attention over every cell of every level"""

    def __init__(self, d_model: int, heads: int, levels: int, points: int, layers: int, rng: np.random.Generator):
        self.layers = [EncoderLayer(d_model, heads, levels, points, rng) for _ in range(layers)]

    def forward(self, pyramid: FeaturePyramid, pos: Sequence[np.ndarray]) -> FeaturePyramid:
        return self_attention_fuse(pyramid, pos, self.layers)


def self_attention_fuse(pyramid: FeaturePyramid, pos: Sequence[np.ndarray], layers: Sequence[EncoderLayer]):
    """Run the encoder layers with each cell querying at its own location."""
    shapes = pyramid.level_shapes
    if [tuple(p.shape[1:]) for p in pos] != shapes:
        raise ConfigError(f"positional embedding shapes do not match pyramid {shapes}")
    b = pyramid.levels[0].shape[0]
    src = flatten_levels(pyramid.levels)
    dtype = src.dtype
    pos_flat = np.concatenate([p.reshape(p.shape[0], -1).T for p in pos]).astype(dtype)
    ref_flat = np.concatenate([reference_grid(h, w) for h, w in shapes]).astype(dtype)
    pos_t = Tensor(pos_flat[None])
    ref_t = Tensor(np.broadcast_to(ref_flat[None], (b,) + ref_flat.shape))
    for layer in layers:
        src = layer(src, pos_t, ref_t, shapes)
    return FeaturePyramid(unflatten_levels(src, shapes))


def bypass_fuse(pyramid: FeaturePyramid, pos: Sequence[np.ndarray]) -> FeaturePyramid:
    """Scene encodings plus positional embeddings, without attention"""
    return FeaturePyramid([level + p.astype(level.dtype)[None] for level, p in zip(pyramid.levels, pos)])


class CrossAttentionLayer(Module):
    def __init__(self, d_model: int, heads: int, levels: int, points: int, rng: np.random.Generator):
        self.attn = MSDeformAttn(d_model, heads, levels, points, rng)
        self.norm1 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, 4 * d_model, d_model, rng)
        self.norm2 = LayerNorm(d_model)

    def forward(self, tgt: Tensor, query: Tensor, ref_points: Tensor, pyramid: Sequence[Tensor]) -> Tensor:
        tgt = self.norm1(tgt + self.attn(query, ref_points, pyramid))
        return self.norm2(tgt + self.ffn(tgt))


class CrossAttentionStack(Module):
    def __init__(self, d_model: int, heads: int, levels: int, points: int, layers: int, rng: np.random.Generator):
        self.layers = [CrossAttentionLayer(d_model, heads, levels, points, rng) for _ in range(layers)]

    def forward(
        self,
        temporal_q: Tensor,
        mode_q: Optional[Tensor],
        ref_points: Tensor,
        pyramid: FeaturePyramid,
        pos: Optional[Sequence[np.ndarray]] = None,
    ) -> Tensor:
        """Decode mode queries [B, M, d] through every layer.

        ``mode_q`` [M, d] seeds the per-mode content and is added to the
        query of every layer; with ``pos`` given, the finest positional map
        sampled at the reference points is added to the query as well.
        """
        pos_q = None
        if pos is not None:
            finest = pos[-1].astype(temporal_q.dtype)
            b = temporal_q.shape[0]
            pos_map = Tensor(np.broadcast_to(finest[None], (b,) + finest.shape))
            pos_q = bilinear_sample(pos_map, ref_points)
        tgt = temporal_q if mode_q is None else temporal_q + mode_q
        for layer in self.layers:
            query = tgt if mode_q is None else tgt + mode_q
            if pos_q is not None:
                query = query + pos_q
            tgt = layer(tgt, query, ref_points, pyramid.levels)
        return tgt
