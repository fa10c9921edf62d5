import numpy as np
import pytest

from autograd.tensor import numerics
from config import GridSection, ModelSection, RunConfig, preset
from scene.grid import GridConfig
from scene.raster import rasterize
from scene.synth import generate_scene

# 32x32 grid, ego near the bottom, strides (4, 8, 16, 32) -> levels 1x1 .. 8x8
TINY_GRID = GridSection(height=32, width=32, resolution=1.0, ego_row=26, ego_col=16)
TINY_MODEL = ModelSection(
    d_model=8,
    strides=(4, 8, 16, 32),
    gru_hidden=4,
    heads=2,
    points=2,
    layers=1,
    modes=3,
    recurrent_steps=3,
    chunk=4,
)


@pytest.fixture(autouse=True)
def reset_numerics():
    numerics.strict = False
    numerics.clamp_counts.clear()
    yield
    numerics.strict = False
    numerics.clamp_counts.clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_grid() -> GridConfig:
    return TINY_GRID.grid()


@pytest.fixture
def tiny_config(tmp_path) -> RunConfig:
    config = RunConfig(grid=TINY_GRID, model=TINY_MODEL)
    config = config.replace("train", batch_size=4, epochs=2)
    config = config.replace("data", manifest=str(tmp_path / "data" / "manifest.jsonl"), train_samples=8,
                            eval_samples=4)
    return config.validate()


@pytest.fixture
def desk_config() -> RunConfig:
    return preset("desk")


@pytest.fixture
def tiny_samples(tiny_grid):
    kinds = ("straight", "curve", "t_junction", "fork")
    return [rasterize(generate_scene(seed, kinds[seed % 4], grid=tiny_grid), tiny_grid) for seed in range(4)]
