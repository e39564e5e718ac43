import json
import logging

import numpy as np

from config.settings import Config
from sparsepose.errors import ConfigError
from sparsepose.jobs.common import load_samples, require, start_run
from sparsepose.services import model as model_service
from sparsepose.services.heatmaps import decode_joints
from sparsepose.storage.annotations import write_annotations
from sparsepose.storage.weights import read_weights_header

logger = logging.getLogger(__name__)

def load_model(config, path):
    """
    Rebuild the graph a weight file was written for and load it

    Returns:
        tuple: (ModelGraph, modality the weights were trained on)
    """
    header = read_weights_header(require(path, 'weights'))
    stored = header['graph']
    modality = header.get('config', {}).get('modality', config.modality)
    if Config.MODALITY_CHANNELS.get(modality) != stored['input_channels']:
        raise ConfigError(f"{path}: modality '{modality}' does not match {stored['input_channels']} input channels")
    if stored['backbone']['name'] != config.backbone:
        raise ConfigError(f"{path} holds {stored['backbone']['name']} weights, not {config.backbone}")
    if modality == 'grayscale' and config.conv_mode == model_service.SPARSE:
        raise ConfigError("Grayscale weights can only run in dense conv mode")

    graph = model_service.build_backbone(stored['backbone']['name'], stored['input_channels'],
                                         num_joints=stored['num_joints'])
    model_service.load_weights(graph, path)
    return graph, modality

def run_infer(config):
    """
    Predict joints for every frame of a clip

    Writes predictions.csv (annotation layout, native resolution) and, with
    ``dump_heatmaps``, heatmaps.npz carrying the run config.
    """
    manifest = start_run(config)
    if not config.weights:
        raise ConfigError("Inference needs a weights file")
    graph, modality = load_model(config, config.weights[0])
    samples = load_samples(config, modality)

    predictions, heatmaps = [], []
    for start in range(0, len(samples), config.batch_size):
        batch = samples[start:start + config.batch_size]
        grids = model_service.forward(graph, [s.x for s in batch], mode=config.conv_mode)
        for sample, grid in zip(batch, grids):
            truth = sample.annotation
            decoded = decode_joints(grid, frame_id=truth.frame_id, camera_id=truth.camera_id,
                                    action_id=truth.action_id)
            predictions.append(decoded.rescaled(*truth.resolution))
            if config.dump_heatmaps:
                heatmaps.append(grid.astype(np.float32))

    paths = {'predictions': manifest.artifact('predictions.csv')}
    write_annotations(predictions, paths['predictions'], config=manifest.config)
    if config.dump_heatmaps:
        paths['heatmaps'] = manifest.artifact('heatmaps.npz')
        np.savez_compressed(paths['heatmaps'], heatmaps=np.stack(heatmaps),
                            frame_ids=np.array([p.frame_id for p in predictions]),
                            config=np.array(json.dumps(manifest.config, sort_keys=True, default=str)))
    manifest.save()
    logger.info(f"Predicted {len(predictions)} frames with {graph.spec.name} ({config.conv_mode})")
    return paths
