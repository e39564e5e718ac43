import logging

import pandas as pd

from sparsepose.jobs.common import require, start_run
from sparsepose.storage.reports import write_table
from sparsepose.storage.spf import read_spf

logger = logging.getLogger(__name__)

def run_stats(config):
    """Per-frame and mean channel sparsity of an SPF clip, written to sparsity.csv"""
    manifest = start_run(config)
    clip = read_spf(require(config.input, 'input SPF'))
    rows = [dict(frame=frame.index, **frame.sparsity()) for frame in clip.frames]
    table = pd.DataFrame(rows, columns=['frame', 'edge', 'mv', 'fusion'])
    mean = table[['edge', 'mv', 'fusion']].mean()
    table = pd.concat([table, pd.DataFrame([dict(frame='mean', **mean.to_dict())])], ignore_index=True)

    path = manifest.artifact('sparsity.csv')
    write_table(table, path, config=manifest.config)
    manifest.save()
    logger.info(f"Mean sparsity: edge {mean['edge']:.4f}, MV {mean['mv']:.4f}, fusion {mean['fusion']:.4f}")
    return {'sparsity': path, 'mean': mean.to_dict()}
