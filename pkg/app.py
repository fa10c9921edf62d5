"""Command implementations behind the CLI"""

import dataclasses
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from config import ConfigError, ConfigMismatchError, RunConfig, config_hash, run_config_from_dict
from metrics import corridor_coverage, metric_records, write_records
from model.predictor import VARIANTS, ablation_flags, collate
from render import render_sample, write_image
from scene.raster import rasterize
from scene.synth import generate_scene
from storage import ManifestEntry, load_checkpoint, read_manifest, read_sample, write_manifest, write_sample
from training import Trainer, evaluate, model_from_checkpoint
from utils import ensure_dir, median, split_counts, worker_count

logger = logging.getLogger(__name__)

SAMPLE_SUFFIX = ".casp"
METRICS_REPORT = "metrics.jsonl"
ABLATION_REPORT = "ablation.jsonl"


def dataset_plan(config: RunConfig) -> List[ManifestEntry]:
    """Kinds, seeds and relative paths of every sample, in manifest order"""
    rng = np.random.default_rng(config.train.seed)
    entries = []
    for split, total in (("train", config.data.train_samples), ("eval", config.data.eval_samples)):
        counts = split_counts(total, config.data.kinds)
        kinds = [kind for kind, _ in config.data.kinds for _ in range(counts[kind])]
        kinds = [kinds[i] for i in rng.permutation(len(kinds))]
        seeds = rng.integers(0, 2**63 - 1, size=len(kinds), dtype=np.int64)
        for i, (kind, seed) in enumerate(zip(kinds, seeds)):
            entries.append(ManifestEntry(os.path.join(split, f"{i:05d}_{kind}{SAMPLE_SUFFIX}"), kind, int(seed), split))
    return entries


def _build_one(entry: ManifestEntry, out_dir: str, config: RunConfig):
    grid = config.grid.grid()
    scene = generate_scene(
        entry.seed,
        entry.kind,
        grid=grid,
        history_steps=config.model.history_steps,
        future_steps=config.model.future_steps,
    )
    write_sample(rasterize(scene, grid), os.path.join(out_dir, entry.path))


def cmd_build_dataset(config: RunConfig, out_dir: str) -> str:
    """Generate, rasterize and store the configured scene mix.

    Returns:
        str: Path of the written manifest.
    """
    entries = dataset_plan(config)
    manifest = os.path.join(out_dir, "manifest.jsonl")
    for split in ("train", "eval"):
        ensure_dir(os.path.join(out_dir, split))
    workers = worker_count()
    logger.info(f"building {len(entries)} samples in {out_dir} with {workers} workers")
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda e: _build_one(e, out_dir, config), entries))
        write_manifest(entries, manifest)
    except Exception as e:
        logger.error(f"Dataset build failed: {e}")
        if os.path.exists(manifest):
            os.remove(manifest)
        raise
    return manifest


def load_split(manifest: str, split: str):
    entries = read_manifest(manifest, split=split)
    return entries, [read_sample(e.path) for e in entries]


def check_grid(config: RunConfig, sample):
    expected = (config.grid.height, config.grid.width)
    if tuple(sample.grid_shape) != expected:
        raise ConfigMismatchError(f"samples are {sample.grid_shape[0]}x{sample.grid_shape[1]}, config expects "
                                  f"{expected[0]}x{expected[1]}")


def cmd_train(config: RunConfig, out_dir: str, resume: Optional[str] = None) -> str:
    """Train on the manifest's train split; returns the checkpoint path"""
    train_entries, train = load_split(config.data.manifest, "train")
    _, held_out = load_split(config.data.manifest, "eval")
    if not train:
        raise ConfigError(f"manifest {config.data.manifest} has no train samples")
    check_grid(config, train[0])
    trainer = Trainer(config, out_dir, train, held_out, train_entries)
    if resume:
        trainer.resume(resume)
    trainer.fit()
    return trainer.path("checkpoint.ckpt")


def cmd_eval(
    checkpoint: str, manifest: str, config: Optional[RunConfig] = None, out: Optional[str] = None, split: str = "eval"
) -> List[Dict]:
    """Score a checkpoint on one split and write the metrics report.

    The configuration stored in the checkpoint is used; a ``config`` passed
    in must hash identically or the command refuses to run.
    """
    ckpt = load_checkpoint(checkpoint)
    stored = run_config_from_dict(ckpt.meta["config"])
    if config_hash(stored) != ckpt.config_hash:
        raise ConfigMismatchError(f"{checkpoint}: stored config does not match its hash {ckpt.config_hash}")
    if config is not None and config_hash(config) != ckpt.config_hash:
        raise ConfigMismatchError(
            f"checkpoint config {ckpt.config_hash} differs from the requested config {config_hash(config)}; "
            f"evaluate without overrides or retrain"
        )
    entries, samples = load_split(manifest, split)
    if not samples:
        raise ConfigError(f"manifest {manifest} has no {split} samples")
    check_grid(stored, samples[0])

    model = model_from_checkpoint(ckpt, stored)
    result = evaluate(model, samples, stored.train.batch_size, stored.grid.resolution)
    records = metric_records(result.metrics, result.n_samples, ckpt.config_hash)
    out = out or os.path.join(os.path.dirname(os.path.abspath(checkpoint)), METRICS_REPORT)
    write_records(records, out)
    logger.info(f"evaluated {len(samples)} samples: {result.metrics}")
    return records


def fork_corridors(entries: Sequence[ManifestEntry], config: RunConfig) -> List[List[np.ndarray]]:
    """Candidate corridors in grid frame, regenerated from the scene seeds"""
    grid = config.grid.grid()
    corridors = []
    for e in entries:
        scene = generate_scene(e.seed, e.kind, grid=grid, history_steps=config.model.history_steps,
                               future_steps=config.model.future_steps)
        corridors.append([grid.to_grid(c) for c in scene.corridors] if e.kind == "fork" else [])
    return corridors


def _variant_config(config: RunConfig, variant: str, seed: int) -> RunConfig:
    ablation = dataclasses.asdict(ablation_flags(variant))
    return config.replace("ablation", **ablation).replace("train", seed=seed).validate()


def _run_variant(config: RunConfig, variant: str, seed: int, out_dir: str, data) -> Dict:
    train_entries, train, eval_entries, held_out, corridors = data
    cfg = _variant_config(config, variant, seed)
    trainer = Trainer(cfg, os.path.join(out_dir, f"{variant}_seed{seed}"), train, (), train_entries)
    trainer.fit()
    result = evaluate(trainer.model, held_out, cfg.train.batch_size, cfg.grid.resolution)
    return {
        **result.metrics,
        "coverage": corridor_coverage(result.mu, corridors, resolution=cfg.grid.resolution),
        "epoch_seconds": float(np.mean(trainer.epoch_seconds)) if trainer.epoch_seconds else 0.0,
        "parameters": trainer.model.num_parameters(),
        "config_hash": trainer.hash,
    }


def ablation_checks(rows: Dict[str, Dict], modes: int) -> List[Dict]:
    """Direction-level comparisons of each variant against the baseline"""
    ade = f"minADE_{modes}"
    base = rows.get("baseline")
    checks = []

    def check(name: str, variant: str, passed):
        row = rows.get(variant)
        ok = bool(base and row and row.get("status") == "ok" and base.get("status") == "ok" and passed(base, row))
        checks.append({"check": name, "variant": variant, "passed": ok})

    check("mode_queries_min_ade", "no_mode_queries", lambda b, r: r[ade] >= 1.2 * b[ade])
    check("mode_queries_coverage", "no_mode_queries", lambda b, r: b["coverage"] >= 0.6 and r["coverage"] < 0.3)
    check("recurrence_min_ade", "no_recurrence", lambda b, r: r[ade] >= b[ade])
    check("self_attention_epoch_time", "no_self_attention", lambda b, r: r["epoch_seconds"] <= 0.7 * b["epoch_seconds"])
    check("self_attention_min_ade", "no_self_attention", lambda b, r: r[ade] > b[ade])
    return checks


def cmd_ablate(
    config: RunConfig, out_dir: str, variants: Optional[Sequence[str]] = None, seeds: Optional[Sequence[int]] = None
) -> Dict[str, object]:
    """Train and evaluate every ablation variant on the same dataset.

    Metrics and epoch times are medians over ``seeds``. A variant that fails
    is reported as failed and the others continue.

    Returns:
        dict: ``rows`` (variant -> medians and status) and ``checks``.
    """
    variants = list(variants or VARIANTS)
    seeds = list(seeds if seeds is not None else config.train.ablation_seeds)
    ensure_dir(out_dir)
    train_entries, train = load_split(config.data.manifest, "train")
    eval_entries, held_out = load_split(config.data.manifest, "eval")
    check_grid(config, train[0])
    data = (train_entries, train, eval_entries, held_out, fork_corridors(eval_entries, config))

    rows: Dict[str, Dict] = {}
    for variant in variants:
        runs, error = [], None
        start = time.perf_counter()
        for seed in seeds:
            try:
                runs.append(_run_variant(config, variant, seed, out_dir, data))
            except Exception as e:
                logger.error(f"variant {variant} seed {seed} failed: {e}")
                error = f"{type(e).__name__}: {e}"
                break
        if error is not None:
            rows[variant] = {"variant": variant, "status": "failed", "error": error}
            continue
        keys = [k for k in runs[0] if k not in ("config_hash", "parameters")]
        rows[variant] = {
            "variant": variant,
            "status": "ok",
            "seeds": seeds,
            "parameters": runs[0]["parameters"],
            **{k: median([r[k] for r in runs]) for k in keys},
        }
        logger.info(f"variant {variant} done in {time.perf_counter() - start:.1f}s: {rows[variant]}")

    checks = ablation_checks(rows, config.model.modes)
    write_records(list(rows.values()) + checks, os.path.join(out_dir, ABLATION_REPORT))
    return {"rows": rows, "checks": checks}


def cmd_render(sample_path: str, out_image: str, checkpoint: Optional[str] = None, scale: int = 4) -> str:
    """Draw a stored sample, with the checkpoint's predictions when given"""
    sample = read_sample(sample_path)
    mu = None
    if checkpoint:
        ckpt = load_checkpoint(checkpoint)
        config = run_config_from_dict(ckpt.meta["config"])
        check_grid(config, sample)
        model = model_from_checkpoint(ckpt, config)
        mu = model(collate([sample])).mu.data[0]
    write_image(render_sample(sample, mu, scale=scale), out_image)
    return out_image
