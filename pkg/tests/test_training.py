import dataclasses
import json
import math

import numpy as np
import pytest

from config import ConfigMismatchError
from metrics import read_records
from storage import ManifestEntry, load_checkpoint
from training import (
    CHECKPOINT,
    DIVERGED,
    LOSS_LOG,
    TIMING_LOG,
    Trainer,
    TrainingDivergedError,
    evaluate,
    model_from_checkpoint,
)


@pytest.fixture
def train_config(tiny_config):
    return tiny_config.replace("train", batch_size=2, epochs=2)


def losses(history):
    return [record["loss"] for record in history]


class TestTrainer:
    def test_same_seed_same_losses(self, train_config, tiny_samples, tmp_path):
        first = Trainer(train_config, str(tmp_path / "a"), tiny_samples).fit()
        second = Trainer(train_config, str(tmp_path / "b"), tiny_samples).fit()
        assert losses(first) == losses(second)
        assert all(math.isfinite(v) for v in losses(first))

    def test_logs_and_checkpoint(self, train_config, tiny_samples, tmp_path):
        trainer = Trainer(train_config, str(tmp_path), tiny_samples, tiny_samples[:2])
        trainer.fit()
        records = read_records(str(tmp_path / LOSS_LOG))
        assert [r["epoch"] for r in records] == [1, 2]
        assert {r["config_hash"] for r in records} == {trainer.hash}
        assert set(records[0]["eval"]) == {"minADE_3", "minFDE_1", "MR_3", "OffRoadRate"}
        timing = read_records(str(tmp_path / TIMING_LOG))
        assert len(timing) == 2 and all(r["seconds"] > 0 for r in timing)
        ckpt = load_checkpoint(str(tmp_path / CHECKPOINT))
        assert ckpt.epoch == 2 and ckpt.config_hash == trainer.hash

    def test_resume_continues_the_same_run(self, train_config, tiny_samples, tmp_path):
        full = Trainer(train_config, str(tmp_path / "full"), tiny_samples).fit()

        Trainer(train_config, str(tmp_path / "part"), tiny_samples).fit(epochs=1)
        resumed = Trainer(train_config, str(tmp_path / "resumed"), tiny_samples)
        resumed.resume(str(tmp_path / "part" / CHECKPOINT))
        rest = resumed.fit()
        assert resumed.epoch == 2
        assert losses(rest) == losses(full)[1:]

    def test_checkpoint_is_idempotent(self, train_config, tiny_samples, tmp_path):
        trainer = Trainer(train_config, str(tmp_path / "a"), tiny_samples)
        trainer.fit(epochs=1)
        other = Trainer(train_config, str(tmp_path / "b"), tiny_samples)
        other.resume(trainer.save())
        other.save()
        assert (tmp_path / "a" / CHECKPOINT).read_bytes() == (tmp_path / "b" / CHECKPOINT).read_bytes()

    def test_resume_refuses_other_config(self, train_config, tiny_samples, tmp_path):
        trainer = Trainer(train_config, str(tmp_path / "a"), tiny_samples)
        path = trainer.save()
        other = Trainer(train_config.replace("optim", lr=5e-4), str(tmp_path / "b"), tiny_samples)
        with pytest.raises(ConfigMismatchError):
            other.resume(path)

    def test_divergence_dump(self, train_config, tiny_samples, tmp_path):
        config = train_config.replace("train", augment=False)
        broken = dataclasses.replace(tiny_samples[1], gt=np.full_like(tiny_samples[1].gt, np.nan))
        samples = [tiny_samples[0], broken]
        entries = [ManifestEntry("a.casp", "straight", 10), ManifestEntry("b.casp", "curve", 11)]
        trainer = Trainer(config, str(tmp_path), samples, train_entries=entries)
        with pytest.raises(TrainingDivergedError):
            trainer.fit()
        dump = json.loads((tmp_path / DIVERGED).read_text())
        assert dump["epoch"] == 0 and dump["config_hash"] == trainer.hash
        assert 11 in dump["seeds"] and "curve" in dump["kinds"]


class TestEvaluate:
    def test_checkpoint_reproduces_predictions(self, train_config, tiny_samples, tmp_path):
        trainer = Trainer(train_config, str(tmp_path), tiny_samples)
        trainer.fit(epochs=1)
        restored = model_from_checkpoint(load_checkpoint(trainer.save()), train_config)
        a = evaluate(trainer.model, tiny_samples, batch_size=3)
        b = evaluate(restored, tiny_samples, batch_size=3)
        assert a.metrics == b.metrics
        np.testing.assert_array_equal(a.mu, b.mu)
        assert a.n_samples == 4 and a.mu.shape == (4, 3, 12, 2)

    def test_batch_size_does_not_change_metrics(self, train_config, tiny_samples, tmp_path):
        model = Trainer(train_config, str(tmp_path), tiny_samples).model
        whole = evaluate(model, tiny_samples, batch_size=4).metrics
        split = evaluate(model, tiny_samples, batch_size=1).metrics
        for name, value in whole.items():
            assert split[name] == pytest.approx(value, rel=1e-5, abs=1e-6)
