#!/usr/bin/env python3
"""
bevtraj - multi-modal trajectory prediction from rasterized BEV scenes
Entry point for the command line
"""

import dataclasses
import logging
import signal
import sys

import click

import app
from config import ConfigError, ConfigManager
from model.predictor import VARIANTS, ablation_flags
from storage import SampleFormatError
from training import TrainingDivergedError

logger = logging.getLogger(__name__)

# Handle Ctrl+C gracefully
signal.signal(signal.SIGINT, signal.SIG_DFL)


def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, SampleFormatError, TrainingDivergedError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        sys.exit(1)


@click.group()
@click.option("--verbose", "-v", count=True, help="Increase verbosity of logging")
@click.option("--quiet", "-q", count=True, help="Decrease verbosity of logging")
@click.option("--config", "config_file", type=click.Path(dir_okay=False), default=None, help="YAML run config")
@click.option("--preset", type=click.Choice(["desk", "paper"]), default=None, help="Base preset")
@click.option("--seed", type=int, default=None, help="Override train.seed")
@click.pass_context
def main(ctx, verbose, quiet, config_file, preset, seed):
    """Main entry point"""
    verbosity = verbose - quiet + 2
    logging.basicConfig(
        level=max(
            (min(logging.CRITICAL - verbosity * 10, logging.CRITICAL), logging.DEBUG)
        ),
        format="[%(asctime)s] [%(filename)16s:%(lineno)3s)] [%(levelname)8s]: %(message)s",
        datefmt="%Y-%m-%d] [%H:%M:%S",
    )
    manager = _run(ConfigManager, config_file)
    if preset:
        manager.preset_name = preset
    if seed is not None:
        manager.set("train", "seed", seed)
    ctx.obj = _run(manager.run_config)


@main.command("build-dataset")
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Output directory")
@click.pass_obj
def build_dataset(config, out):
    """Generate synthetic scenes and write samples plus manifest"""
    manifest = _run(app.cmd_build_dataset, config, out)
    click.echo(manifest)


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Run directory")
@click.option("--variant", type=click.Choice(sorted(VARIANTS)), default="baseline")
@click.option("--manifest", default=None, help="Override data.manifest")
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), default=None, help="Checkpoint to resume")
@click.pass_obj
def train(config, out, variant, manifest, resume):
    """Train a model"""
    config = config.replace("ablation", **dataclasses.asdict(ablation_flags(variant)))
    if manifest:
        config = config.replace("data", manifest=manifest)
    click.echo(_run(app.cmd_train, _run(config.validate), out, resume))


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", default=None, help="Report path")
@click.option("--split", default="eval", show_default=True)
def evaluate(checkpoint, manifest, out, split):
    """Score a checkpoint and write the metrics report"""
    for record in _run(app.cmd_eval, checkpoint, manifest, None, out, split):
        name = record["metric"] if record["k"] is None else f"{record['metric']}_{record['k']}"
        click.echo(f"{name}: {record['value']:.4f}")


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Report directory")
@click.option("--variant", "variants", multiple=True, type=click.Choice(sorted(VARIANTS)))
@click.option("--manifest", default=None, help="Override data.manifest")
@click.pass_obj
def ablate(config, out, variants, manifest):
    """Train and compare the ablation variants"""
    if manifest:
        config = config.replace("data", manifest=manifest)
    report = _run(app.cmd_ablate, config, out, variants or None)
    for check in report["checks"]:
        click.echo(f"{check['check']}: {'pass' if check['passed'] else 'FAIL'}")


@main.command()
@click.option("--sample", "sample_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", required=True, help="Output .ppm image")
@click.option("--scale", type=int, default=4, show_default=True)
def render(sample_path, checkpoint, out, scale):
    """Render a sample with predicted trajectories"""
    click.echo(_run(app.cmd_render, sample_path, out, checkpoint, scale))


if __name__ == "__main__":
    main()  # pylint: disable=no-value-for-parameter
