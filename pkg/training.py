"""Training loop, evaluation and checkpoint plumbing"""

import json
import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from autograd.optim import AdamW
from autograd.tensor import Tape
from config import ConfigMismatchError, RunConfig, config_hash
from metrics import evaluate_predictions, write_records
from model.predictor import TrajectoryPredictor, collate
from objective import compute_losses
from scene.augment import augment
from scene.raster import RasterSample
from storage import Checkpoint, ManifestEntry, load_checkpoint, save_checkpoint
from utils import batches, ensure_dir

logger = logging.getLogger(__name__)

LOSS_LOG = "loss.jsonl"
TIMING_LOG = "timing.jsonl"
CHECKPOINT = "checkpoint.ckpt"
DIVERGED = "diverged.json"


class TrainingDivergedError(RuntimeError):
    """The loss became NaN or infinite."""


@dataclass
class EvalResult:
    metrics: Dict[str, float]
    mu: np.ndarray
    pi: np.ndarray
    n_samples: int


def evaluate(
    model: TrajectoryPredictor, samples: Sequence[RasterSample], batch_size: int, resolution: float = 1.0
) -> EvalResult:
    """Predict every sample (no gradient tape) and score the predictions."""
    mus, pis = [], []
    for chunk in batches(list(range(len(samples))), batch_size):
        prediction = model.predict([samples[i] for i in chunk])
        mus.append(prediction.mu.data)
        pis.append(prediction.pi.data)
    mu, pi = np.concatenate(mus), np.concatenate(pis)
    gt = np.stack([s.gt for s in samples])
    drivable = np.stack([s.drivable_mask for s in samples])
    metrics = evaluate_predictions(mu, pi, gt, drivable, model.config.modes, resolution)
    return EvalResult(metrics, mu, pi, len(samples))


def model_from_checkpoint(ckpt: Checkpoint, config: RunConfig) -> TrajectoryPredictor:
    model = TrajectoryPredictor(config.model, config.grid, config.ablation, seed=config.train.seed)
    model.load_state_dict({k[len("param."):]: v for k, v in ckpt.tensors.items() if k.startswith("param.")})
    return model


class Trainer:
    """Seeded training run writing logs and checkpoints into ``out_dir``.

    One generator drives shuffling and augmentation; its state is stored in
    every checkpoint so a resumed run continues the same sequence.
    """

    def __init__(
        self,
        config: RunConfig,
        out_dir: str,
        train_samples: Sequence[RasterSample],
        eval_samples: Sequence[RasterSample] = (),
        train_entries: Optional[Sequence[ManifestEntry]] = None,
    ):
        self.config = config
        self.hash = config_hash(config)
        self.out_dir = ensure_dir(out_dir)
        self.train_samples = list(train_samples)
        self.eval_samples = list(eval_samples)
        self.train_entries = list(train_entries) if train_entries else None
        self.model = TrajectoryPredictor(config.model, config.grid, config.ablation, seed=config.train.seed)
        opt = config.optim
        self.optimizer = AdamW(self.model, opt.lr, (opt.beta1, opt.beta2), opt.eps, opt.weight_decay)
        self.rng = np.random.default_rng(config.train.seed)
        self.epoch = 0
        self.epoch_seconds: List[float] = []
        logger.info(
            f"trainer {self.hash}: {self.model.num_parameters()} parameters, {len(self.train_samples)} train samples"
        )

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _dump_divergence(self, batch_index: int, indices: Sequence[int], value: float):
        record = {
            "config_hash": self.hash,
            "epoch": self.epoch,
            "batch": batch_index,
            "indices": [int(i) for i in indices],
            "loss": repr(value),
        }
        if self.train_entries:
            record["seeds"] = [self.train_entries[i].seed for i in indices]
            record["kinds"] = [self.train_entries[i].kind for i in indices]
        with open(self.path(DIVERGED), "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2, sort_keys=True)
        logger.error(f"non-finite loss {value} at epoch {self.epoch} batch {batch_index}, dump in {DIVERGED}")

    def train_epoch(self) -> Dict[str, float]:
        """One pass over the shuffled training set"""
        train = self.config.train
        order = self.rng.permutation(len(self.train_samples))
        sums = {"loss": 0.0, "reg": 0.0, "cls": 0.0}
        for batch_index, indices in enumerate(batches(order, train.batch_size)):
            samples = [self.train_samples[i] for i in indices]
            if train.augment:
                samples = [augment(s, self.rng, probability=train.augment_probability) for s in samples]
            batch = collate(samples)
            with Tape() as tape:
                terms = compute_losses(self.model(batch), batch.gt, normalized=train.normalized_cls)
            value = terms.total.item()
            if not math.isfinite(value):
                self._dump_divergence(batch_index, indices, value)
                raise TrainingDivergedError(f"loss {value} at epoch {self.epoch}, batch {batch_index}")
            tape.backward(terms.total)
            self.optimizer.step()
            self.optimizer.zero_grad()
            n = len(indices)
            sums["loss"] += value * n
            sums["reg"] += terms.reg.item() * n
            sums["cls"] += terms.cls.item() * n
            logger.debug(f"epoch {self.epoch} batch {batch_index} loss {value:.5f}")
        return {k: v / len(self.train_samples) for k, v in sums.items()}

    def fit(self, epochs: Optional[int] = None) -> List[Dict[str, float]]:
        """Train until ``epochs`` (default: config) epochs are complete.

        Returns:
            list: The loss-log records written during this call.
        """
        epochs = self.config.train.epochs if epochs is None else epochs
        mode = "w" if self.epoch == 0 else "a"
        if mode == "w":
            for name in (LOSS_LOG, TIMING_LOG):
                open(self.path(name), "w").close()
        history = []
        while self.epoch < epochs:
            start = time.perf_counter()
            stats = self.train_epoch()
            seconds = time.perf_counter() - start
            self.epoch += 1
            self.epoch_seconds.append(seconds)

            record = {"config_hash": self.hash, "epoch": self.epoch, **stats}
            if self.eval_samples:
                result = evaluate(self.model, self.eval_samples, self.config.train.batch_size,
                                  self.config.grid.resolution)
                record["eval"] = result.metrics
            write_records([record], self.path(LOSS_LOG), append=True)
            write_records([{"config_hash": self.hash, "epoch": self.epoch, "seconds": seconds}],
                          self.path(TIMING_LOG), append=True)
            self.save()
            history.append(record)
            logger.info(f"epoch {self.epoch}/{epochs} loss {stats['loss']:.4f} ({seconds:.1f}s)")
        return history

    def checkpoint(self) -> Checkpoint:
        tensors = {f"param.{name}": p.data for name, p in self.model.named_parameters()}
        opt_state = self.optimizer.state_dict()
        tensors.update({f"optim.{name}": array for name, array in opt_state["tensors"].items()})
        meta = {
            "optimizer_step": opt_state["step"],
            "rng_state": self.rng.bit_generator.state,
            "config": self.config.to_dict(),
        }
        return Checkpoint(self.hash, self.epoch, tensors, meta)

    def save(self) -> str:
        path = self.path(CHECKPOINT)
        save_checkpoint(self.checkpoint(), path)
        return path

    def restore(self, ckpt: Checkpoint):
        if ckpt.config_hash != self.hash:
            raise ConfigMismatchError(f"checkpoint was trained with config {ckpt.config_hash}, this run is {self.hash}")
        self.model.load_state_dict({k[len("param."):]: v for k, v in ckpt.tensors.items() if k.startswith("param.")})
        self.optimizer.load_state_dict(
            {
                "step": ckpt.meta["optimizer_step"],
                "tensors": {k[len("optim."):]: v for k, v in ckpt.tensors.items() if k.startswith("optim.")},
            }
        )
        self.rng.bit_generator.state = ckpt.meta["rng_state"]
        self.epoch = ckpt.epoch
        logger.info(f"resumed {self.hash} at epoch {self.epoch}")

    def resume(self, path: str):
        self.restore(load_checkpoint(path))
