import logging
import sys

import click

from config.settings import Config
from sparsepose import __version__, configure_logging
from sparsepose.errors import SparsePoseError
from sparsepose.jobs.bench import run_bench
from sparsepose.jobs.evaluate import run_eval
from sparsepose.jobs.extract import run_extract
from sparsepose.jobs.generate import run_generate
from sparsepose.jobs.infer import run_infer
from sparsepose.jobs.run_config import RunConfig
from sparsepose.jobs.stats import run_stats
from sparsepose.jobs.train import run_train

logger = logging.getLogger(__name__)

def run_job(job, command, **options):
    """
    Build the RunConfig of a subcommand and run its job

    SparsePoseErrors exit with their own exit code, anything else with 1.
    """
    try:
        config = RunConfig.from_options(command, **options)
        job(config)
    except SparsePoseError as e:
        logger.error(f"{command} failed: {e}")
        sys.exit(e.exit_code)
    except Exception as e:
        logger.error(f"Unexpected error in {command}: {str(e)}", exc_info=True)
        sys.exit(1)

def _options(*decorators):
    def apply(f):
        for decorator in reversed(decorators):
            f = decorator(f)
        return f
    return apply

run_dir_option = click.option('--run-dir', type=click.Path(file_okay=False), default=None,
                              help=f'Output directory (default {Config.RUN_DIR})')
seed_option = click.option('--seed', type=int, default=None, help='Random seed')
model_options = _options(
    click.option('--backbone', type=click.Choice(Config.BACKBONES), default=None),
    click.option('--modality', type=click.Choice(Config.MODALITIES), default=None),
    click.option('--conv-mode', type=click.Choice(Config.CONV_MODES), default=None),
)
sensor_options = _options(
    click.option('--edge-low', type=float, default=None, help='Hysteresis low threshold'),
    click.option('--edge-high', type=float, default=None, help='Hysteresis high threshold'),
    click.option('--edge-sigma', type=float, default=None, help='Edge smoothing std'),
    click.option('--mv-block', type=int, default=None, help='Block size for motion search'),
    click.option('--mv-radius', type=int, default=None, help='Motion search radius'),
    click.option('--mv-scale', type=int, default=None, help='MV units per pixel/frame'),
)
clip_options = _options(
    click.option('--input', 'input', type=click.Path(exists=True), required=True, help='SPF clip'),
    click.option('--annotations', type=click.Path(exists=True), required=True),
    click.option('--gray', type=click.Path(exists=True), default=None, help='Grayscale video (grayscale modality)'),
)


@click.group()
@click.option('--log-level', default='INFO', show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
@click.version_option(version=__version__)
def cli(log_level):
    """Sparse submanifold convolution pose estimation on motion vector sensor data"""
    configure_logging(log_level)


@cli.command()
@click.option('--action', default=None, help='Action id (1-16), name or slug')
@click.option('--camera-angle', type=click.Choice(['0', '15', '30', '45']), default=None)
@click.option('--num-frames', type=int, default=None, help=f'Frames (default {Config.CLIP_FRAMES})')
@click.option('--motion-blur', type=float, default=None, help='Exposure fraction 0-1')
@click.option('--save-gray', is_flag=True, default=None, help='Also write the grayscale video')
@click.option('--test-fraction', type=float, default=None, help='Share of frames in the test split')
@sensor_options
@run_dir_option
@seed_option
def generate(camera_angle, **options):
    """Render a synthetic clip and emulate the sensor"""
    run_job(run_generate, 'generate', camera_angle=float(camera_angle) if camera_angle else None, **options)


@cli.command()
@click.option('--input', 'input', type=click.Path(exists=True), required=True,
              help='PGM directory or raw video with .json sidecar')
@sensor_options
@run_dir_option
def extract(**options):
    """Emulate the sensor over a grayscale video"""
    run_job(run_extract, 'extract', **options)


@cli.command()
@clip_options
@model_options
@click.option('--split', type=click.Path(exists=True), default=None, help='Train on the train split only')
@click.option('--weights', type=click.Path(exists=True), default=None, help='Initial weights')
@click.option('--learning-rate', type=float, default=None)
@click.option('--momentum', type=float, default=None)
@click.option('--batch-size', type=int, default=None)
@click.option('--steps', type=int, default=None)
@click.option('--lr-schedule', type=click.Choice(['constant', 'step', 'cosine']), default=None)
@click.option('--warmup-steps', type=int, default=None)
@click.option('--lr-decay-every', type=int, default=None)
@click.option('--lr-decay-factor', type=float, default=None)
@click.option('--recalibrate-norms/--no-recalibrate-norms', default=None,
              help='Reset norm running statistics to averages over the training samples')
@run_dir_option
@seed_option
def train(weights, **options):
    """Train a backbone on a clip"""
    run_job(run_train, 'train', weights=(weights,) if weights else None, **options)


@cli.command()
@clip_options
@model_options
@click.option('--weights', type=click.Path(exists=True), required=True)
@click.option('--batch-size', type=int, default=None)
@click.option('--dump-heatmaps', is_flag=True, default=None)
@run_dir_option
def infer(weights, **options):
    """Predict joints for every frame of a clip"""
    run_job(run_infer, 'infer', weights=(weights,), **options)


@cli.command(name='eval')
@clip_options
@model_options
@click.option('--weights', type=click.Path(exists=True), multiple=True, required=True,
              help='Repeat to compare models in one report')
@click.option('--split', type=click.Path(exists=True), required=True)
@click.option('--split-name', default=None, help='Split to evaluate (default test)')
@click.option('--batch-size', type=int, default=None)
@run_dir_option
def evaluate(weights, **options):
    """MPJPE report overall, per action class and per speed class"""
    run_job(run_eval, 'eval', weights=tuple(weights), **options)


@cli.command()
@click.option('--input', 'input', type=click.Path(exists=True), default=None,
              help='SPF clip (default: a short synthetic clip)')
@click.option('--action', default=None, help='Action of the synthetic clip')
@click.option('--backbones', multiple=True, type=click.Choice(Config.BACKBONES), default=None)
@click.option('--bench-frames', type=int, default=None)
@click.option('--warmup', type=int, default=None)
@click.option('--repetitions', type=int, default=None)
@click.option('--sweep', is_flag=True, default=None, help='Also time the sparsity sweep')
@run_dir_option
@seed_option
def bench(backbones, **options):
    """FLOPs and FPS of the dense and sparse engines"""
    run_job(run_bench, 'bench', bench_backbones=tuple(backbones) or None, **options)


@cli.command()
@click.option('--input', 'input', type=click.Path(exists=True), required=True, help='SPF clip')
@run_dir_option
def stats(**options):
    """Average per-channel sparsity of a clip"""
    run_job(run_stats, 'stats', **options)


if __name__ == '__main__':
    cli()
