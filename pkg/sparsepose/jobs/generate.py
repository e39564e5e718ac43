import logging

import numpy as np

from sparsepose.jobs.common import make_sensor, start_run
from sparsepose.services.synthetic import SyntheticScene, generate_clip
from sparsepose.storage.annotations import write_annotations, write_split
from sparsepose.storage.spf import write_spf
from sparsepose.storage.video import write_raw_video

logger = logging.getLogger(__name__)

def run_generate(config):
    """
    Render a synthetic clip and emulate the sensor over it

    Writes clip.spf, annotations.csv, split.csv (seeded train/test split) and,
    with ``save_gray``, the grayscale video gray.raw.

    Returns:
        dict: Artifact paths
    """
    manifest = start_run(config)
    scene = SyntheticScene.random(config.action, seed=config.seed, camera_angle=config.camera_angle,
                                  motion_blur=config.motion_blur)
    sensor = make_sensor(config)
    clip = generate_clip(scene, num_frames=config.num_frames, sensor=sensor)

    echo = dict(manifest.config, scene=scene.to_dict(), sensor=sensor.settings())
    paths = {
        'spf': manifest.artifact('clip.spf'),
        'annotations': manifest.artifact('annotations.csv'),
        'split': manifest.artifact('split.csv'),
    }
    write_spf(paths['spf'], clip.frames, fps=scene.fps, config=echo)
    write_annotations(clip.annotations, paths['annotations'], config=echo)

    rng = np.random.default_rng(config.seed)
    test = rng.random(clip.num_frames) < config.test_fraction
    write_split({i: 'test' if test[i] else 'train' for i in range(clip.num_frames)}, paths['split'], config=echo)

    if config.save_gray:
        paths['gray'] = manifest.artifact('gray.raw')
        write_raw_video(list(clip.gray), paths['gray'], fps=scene.fps)
        manifest.artifact('gray.raw.json')

    manifest.save()
    logger.info(f"Generated {clip.num_frames} frames of '{scene.action.name}' into {config.run_dir}")
    return paths
