from model.backbone import Backbone, FeaturePyramid
from model.decoder import InputError, QueryState, RecurrentDecoder, TrajectoryPrediction
from model.deform_attn import CrossAttentionStack, FusionEncoder, MSDeformAttn, positional_embedding
from model.predictor import VARIANTS, Batch, TrajectoryPredictor, ablation_variant, collate

__all__ = [
    "Backbone",
    "Batch",
    "CrossAttentionStack",
    "FeaturePyramid",
    "FusionEncoder",
    "InputError",
    "MSDeformAttn",
    "QueryState",
    "RecurrentDecoder",
    "TrajectoryPrediction",
    "TrajectoryPredictor",
    "VARIANTS",
    "ablation_variant",
    "collate",
    "positional_embedding",
]
