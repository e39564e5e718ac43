import logging

import pandas as pd

from sparsepose.errors import ConfigError
from sparsepose.jobs.common import load_samples, start_run
from sparsepose.jobs.infer import load_model
from sparsepose.services.evaluation import evaluate
from sparsepose.storage.reports import write_table

logger = logging.getLogger(__name__)

def run_eval(config):
    """
    MPJPE report of one or more weight files on a split of a clip

    Each weight file is evaluated on the modality it was trained on, so passing
    an edge-trained and a fusion-trained model gives both rows in one report.
    The split file is required; ``split_name`` picks its frames.

    Returns:
        dict: Report path and the report DataFrame
    """
    manifest = start_run(config)
    if not config.split:
        raise ConfigError("Evaluation needs an explicit split file (--split)")
    if not config.weights:
        raise ConfigError("Evaluation needs at least one weights file")

    reports = []
    for path in config.weights:
        graph, modality = load_model(config, path)
        samples = load_samples(config, modality, split_name=config.split_name)
        reports.append(evaluate(graph, samples, backbone=graph.spec.name, modality=modality,
                                conv_mode=config.conv_mode, batch_size=config.batch_size))
    report = pd.concat(reports, ignore_index=True)

    path = manifest.artifact('hpe_report.csv')
    write_table(report, path, config=manifest.config)
    manifest.save()
    return {'report': path, 'table': report}
