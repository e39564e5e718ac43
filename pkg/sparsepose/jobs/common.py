import logging
import os

from sparsepose.errors import ConfigError
from sparsepose.services.dataset import GRAYSCALE, build_samples
from sparsepose.services.motion import MotionVectorSensor
from sparsepose.storage.annotations import read_annotations, read_split
from sparsepose.storage.manifest import RunManifest
from sparsepose.storage.spf import read_spf
from sparsepose.storage.video import read_video

logger = logging.getLogger(__name__)

def start_run(config):
    """Validate, log and open the manifest of a run"""
    config.validate()
    config.log()
    os.makedirs(config.run_dir, exist_ok=True)
    return RunManifest(config.run_dir, config.command, config.to_dict())

def require(path, what):
    if not path:
        raise ConfigError(f"Missing required {what} path")
    if not os.path.exists(path):
        raise ConfigError(f"{what.capitalize()} not found: {path}")
    return path

def make_sensor(config):
    return MotionVectorSensor(low=config.edge_low, high=config.edge_high, sigma=config.edge_sigma,
                              block=config.mv_block, radius=config.mv_radius, scale=config.mv_scale)

def load_samples(config, modality, split_name=None):
    """
    Samples of the run's clip for one modality

    Args:
        config (RunConfig): Run settings (input, annotations, gray, split)
        modality (str): Input modality
        split_name (str, optional): Restrict to this split of ``config.split``

    Returns:
        list: Sample objects
    """
    clip = read_spf(require(config.input, 'input SPF'))
    annotations, _ = read_annotations(require(config.annotations, 'annotation'),
                                      resolution=(clip.height, clip.width))
    gray_frames = None
    if modality == GRAYSCALE:
        gray_frames, _ = read_video(require(config.gray, 'grayscale video'))
        if len(gray_frames) != clip.num_frames:
            raise ConfigError(f"Grayscale video has {len(gray_frames)} frames, SPF has {clip.num_frames}")
    frame_ids = None
    if split_name is not None:
        frame_ids = read_split(require(config.split, 'split'), split_name)
    samples = build_samples(clip.frames, annotations, modality, gray_frames=gray_frames, frame_ids=frame_ids)
    logger.info(f"Prepared {len(samples)} {modality} samples from {config.input}")
    return samples
