"""Full prediction model and its ablation variants"""

import logging
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from autograd.nn import Module
from autograd.tensor import Tensor
from config import AblationSection, ConfigError, GridSection, ModelSection
from model.backbone import Backbone, FeaturePyramid, level_shapes, validate_strides
from model.decoder import RecurrentDecoder, TrajectoryPrediction
from model.deform_attn import FusionEncoder, bypass_fuse, positional_embedding
from scene.raster import DYNAMIC_CHANNELS, STATIC_CHANNELS, RasterSample

logger = logging.getLogger(__name__)

# variant name -> ablation switches turned off
VARIANTS = {
    "baseline": (),
    "no_mode_queries": ("mode_queries",),
    "no_self_attention": ("self_attention",),
    "no_recurrence": ("recurrence",),
    "no_ego_position": ("ego_position",),
}


@dataclass
class Batch:
    """Stacked samples in model layout.

    Attributes:
        static: [B, F_s, H, W].
        dynamic: [B, T_i, F_d, H, W].
        ego_cells: [B, 2] (row, col).
        gt: [B, T_o, 2] grid-frame future.
        drivable: [B, H, W] masks.
    """

    static: Tensor
    dynamic: Tensor
    ego_cells: np.ndarray
    gt: np.ndarray
    drivable: np.ndarray

    def __len__(self):
        return self.gt.shape[0]


def collate(samples: Sequence[RasterSample], dtype=None) -> Batch:
    static = np.stack([s.static for s in samples]).transpose(0, 3, 1, 2)
    dynamic = np.stack([s.dynamic for s in samples]).transpose(0, 1, 4, 2, 3)
    return Batch(
        static=Tensor(static, dtype=dtype),
        dynamic=Tensor(dynamic, dtype=dtype),
        ego_cells=np.stack([s.ego_cell for s in samples]),
        gt=np.stack([s.gt for s in samples]).astype(np.float64),
        drivable=np.stack([s.drivable_mask for s in samples]),
    )


class TrajectoryPredictor(Module):
    """Backbone, fusion encoder and recurrent decoder.

    Each sub-module draws its initial weights from its own seeded stream,
    so switching one ablation axis leaves the others' weights unchanged.
    """

    def __init__(self, model: ModelSection, grid: GridSection, ablation: AblationSection, seed: int = 0):
        validate_strides(grid.height, grid.width, model.strides)
        self.config, self.ablation = model, ablation
        self.shapes = level_shapes(grid.height, grid.width, model.strides)
        self.pos = positional_embedding(self.shapes, model.d_model)
        levels = len(model.strides)
        recurrent_steps, chunk = (model.recurrent_steps, model.chunk) if ablation.recurrence else (1, model.future_steps)

        def stream(index: int) -> np.random.Generator:
            return np.random.default_rng([seed, index])

        self.backbone = Backbone(
            len(STATIC_CHANNELS), len(DYNAMIC_CHANNELS), model.d_model, model.strides, model.gru_hidden, stream(0)
        )
        self.encoder = (
            FusionEncoder(model.d_model, model.heads, levels, model.points, model.layers, stream(1))
            if ablation.self_attention
            else None
        )
        self.decoder = RecurrentDecoder(
            d_model=model.d_model,
            modes=model.modes,
            heads=model.heads,
            levels=levels,
            points=model.points,
            layers=model.layers,
            recurrent_steps=recurrent_steps,
            chunk=chunk,
            future_steps=model.future_steps,
            grid_shape=(grid.height, grid.width),
            rng=stream(2),
            mode_queries=ablation.mode_queries,
            ego_position=ablation.ego_position,
            scale_eps=model.scale_eps,
        )

    def encode(self, batch: Batch) -> FeaturePyramid:
        pyramid = self.backbone(batch.static, batch.dynamic)
        if self.encoder is None:
            return bypass_fuse(pyramid, self.pos)
        return self.encoder(pyramid, self.pos)

    def forward(self, batch: Batch) -> TrajectoryPrediction:
        return self.decoder(self.encode(batch), batch.ego_cells, self.pos)

    def predict(self, samples: Sequence[RasterSample]) -> TrajectoryPrediction:
        return self(collate(samples, dtype=self.decoder.temporal_init.dtype))


def ablation_flags(flags: Union[str, Iterable[str]]) -> AblationSection:
    """Turn a variant name or a set of switch names into an AblationSection.

    Accepted names are the variant names of ``VARIANTS`` and the bare
    switches ``mode_queries``, ``self_attention``, ``recurrence``,
    ``ego_position`` (meaning: turn that switch off).
    """
    names = [flags] if isinstance(flags, str) else list(flags)
    off: List[str] = []
    switches = set(VARIANTS["no_mode_queries"] + VARIANTS["no_self_attention"]
                   + VARIANTS["no_recurrence"] + VARIANTS["no_ego_position"])
    for name in names:
        if name in VARIANTS:
            off.extend(VARIANTS[name])
        elif name in switches:
            off.append(name)
        else:
            raise ConfigError(f"unknown ablation flag {name!r}, expected one of {sorted(VARIANTS)}")
    return AblationSection(**{switch: switch not in off for switch in sorted(switches)})


def ablation_variant(
    flags: Union[str, Iterable[str]],
    model: ModelSection,
    grid: GridSection,
    seed: int = 0,
    base: Optional[AblationSection] = None,
) -> TrajectoryPredictor:
    """Build the model with the given ablation axes switched off."""
    ablation = ablation_flags(flags)
    if base is not None:
        ablation = replace(
            ablation,
            **{k: getattr(ablation, k) and getattr(base, k) for k in vars(base)},
        )
    logger.info(f"building variant {flags} -> {ablation}")
    return TrajectoryPredictor(model, grid, ablation, seed=seed)
