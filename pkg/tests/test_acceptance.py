"""Long end-to-end runs at desk scale.

Deselected by default; run with ``pytest -m slow``.
"""

import os

import numpy as np
import pytest

import app
from config import preset
from scene.raster import rasterize
from scene.synth import SCENE_KINDS, generate_scene
from training import Trainer, evaluate

pytestmark = pytest.mark.slow


def test_overfit_small_training_set(tmp_path):
    config = preset("desk")
    config = config.replace("train", augment=False, batch_size=32, epochs=1500, seed=0)
    config = config.replace("optim", lr=3e-3, weight_decay=0.0).validate()
    grid = config.grid.grid()
    samples = [rasterize(generate_scene(seed, SCENE_KINDS[seed % len(SCENE_KINDS)], grid=grid), grid)
               for seed in range(32)]

    trainer = Trainer(config, str(tmp_path), samples)
    history = trainer.fit()
    result = evaluate(trainer.model, samples, batch_size=32)

    assert history[-1]["reg"] < history[0]["reg"]
    assert result.metrics["minADE_5"] < 0.5
    assert result.metrics["minFDE_1"] < 1.0


@pytest.fixture(scope="module")
def fork_benchmark(tmp_path_factory):
    out = tmp_path_factory.mktemp("forks")
    config = preset("desk").replace(
        "data",
        kinds={"fork": 1.0},
        train_samples=200,
        eval_samples=50,
        manifest=os.path.join(str(out), "manifest.jsonl"),
    )
    config = config.replace("train", epochs=15).validate()
    app.cmd_build_dataset(config, str(out))
    return config, app.cmd_ablate(config, str(out / "ablate"))


def passed(report, name):
    return next(c["passed"] for c in report["checks"] if c["check"] == name)


def test_every_variant_trained(fork_benchmark):
    _, report = fork_benchmark
    assert set(report["rows"]) == {"baseline", "no_mode_queries", "no_self_attention", "no_recurrence",
                                   "no_ego_position"}
    assert all(row["status"] == "ok" for row in report["rows"].values())
    assert np.isfinite(report["rows"]["baseline"]["minADE_5"])


def test_mode_queries_prevent_collapse(fork_benchmark):
    _, report = fork_benchmark
    assert passed(report, "mode_queries_min_ade")
    assert passed(report, "mode_queries_coverage")


def test_recurrence_helps(fork_benchmark):
    _, report = fork_benchmark
    assert passed(report, "recurrence_min_ade")


def test_self_attention_costs_time_and_helps(fork_benchmark):
    _, report = fork_benchmark
    assert passed(report, "self_attention_epoch_time")
    assert passed(report, "self_attention_min_ade")
