import logging
import os

import pandas as pd

from sparsepose.jobs.common import load_samples, start_run
from sparsepose.services.model import build_backbone, init_weights, load_weights, save_weights
from sparsepose.services.training import TrainConfig, train
from sparsepose.storage.reports import write_table

logger = logging.getLogger(__name__)

def run_train(config):
    """
    Train a backbone on one clip

    Uses the ``train`` split when a split file is given, every frame otherwise.
    Starts from ``config.weights[0]`` when given. Writes weights.spw and
    losses.csv.

    Returns:
        dict: Artifact paths and the TrainResult
    """
    manifest = start_run(config)
    samples = load_samples(config, config.modality, split_name='train' if config.split else None)

    graph = build_backbone(config.backbone, config.input_channels)
    init_weights(graph, seed=config.seed)
    if config.weights:
        load_weights(graph, config.weights[0])

    train_config = TrainConfig(learning_rate=config.learning_rate, momentum=config.momentum,
                               batch_size=config.batch_size, steps=config.steps,
                               lr_schedule=config.lr_schedule, warmup_steps=config.warmup_steps,
                               lr_decay_every=config.lr_decay_every, lr_decay_factor=config.lr_decay_factor,
                               recalibrate_norms=config.recalibrate_norms, seed=config.seed)
    result = train(graph, samples, train_config)

    paths = {'weights': manifest.artifact('weights.spw'), 'losses': manifest.artifact('losses.csv')}
    save_weights(graph, paths['weights'], config=manifest.config)
    curve = pd.DataFrame({'step': range(len(result.losses)), 'loss': result.losses,
                          'learning_rate': result.learning_rates})
    write_table(curve, paths['losses'], config=dict(manifest.config, reachable_floor=result.floor))
    manifest.save()
    logger.info(f"Weights saved to {os.path.abspath(paths['weights'])}")
    return dict(paths, result=result)
