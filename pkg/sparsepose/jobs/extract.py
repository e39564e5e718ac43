import logging

from sparsepose.jobs.common import make_sensor, require, start_run
from sparsepose.storage.spf import write_spf
from sparsepose.storage.video import read_video

logger = logging.getLogger(__name__)

def run_extract(config):
    """Emulate the sensor over a grayscale video and write clip.spf"""
    manifest = start_run(config)
    frames, fps = read_video(require(config.input, 'grayscale video'))
    sensor = make_sensor(config)
    sparse_frames = sensor.process_clip(frames)

    path = manifest.artifact('clip.spf')
    write_spf(path, sparse_frames, fps=fps, config=dict(manifest.config, sensor=sensor.settings()))
    manifest.save()
    logger.info(f"Extracted {len(sparse_frames)} frames from {config.input}")
    return {'spf': path}
