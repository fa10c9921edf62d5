from scene.grid import DESK_GRID, FULL_GRID, GridConfig
from scene.synth import SCENE_KINDS, AgentTrack, SceneSpec, empty_scene, generate_scene
from scene.raster import DYNAMIC_CHANNELS, STATIC_CHANNELS, RasterSample, rasterize
from scene.augment import augment

__all__ = [
    "AgentTrack",
    "DESK_GRID",
    "DYNAMIC_CHANNELS",
    "GridConfig",
    "FULL_GRID",
    "RasterSample",
    "SCENE_KINDS",
    "STATIC_CHANNELS",
    "SceneSpec",
    "augment",
    "empty_scene",
    "generate_scene",
    "rasterize",
]
