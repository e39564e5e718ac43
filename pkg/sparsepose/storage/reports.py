"""CSV tables with an embedded configuration line."""
import json
import logging

import pandas as pd

from sparsepose.errors import DataError

logger = logging.getLogger(__name__)

CONFIG_PREFIX = '# config: '

def write_table(frame, path, config=None):
    """
    Write a DataFrame as CSV preceded by a ``# config:`` JSON line

    Args:
        frame (pd.DataFrame): Table to write
        path (str): Output path
        config (dict, optional): Producing configuration
    """
    with open(path, 'w', newline='') as f:
        f.write(CONFIG_PREFIX + json.dumps(config or {}, sort_keys=True, default=str) + '\n')
        frame.to_csv(f, index=False)
    logger.info(f"Wrote {len(frame)} rows to {path}")

def read_table(path):
    """
    Read a CSV written by write_table

    Returns:
        tuple: (pd.DataFrame, config dict)
    """
    with open(path, 'r') as f:
        first = f.readline()
        if not first.startswith(CONFIG_PREFIX):
            raise DataError(f"{path}: missing config line")
        try:
            config = json.loads(first[len(CONFIG_PREFIX):])
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: config line is not valid JSON: {e}")
        frame = pd.read_csv(f)
    return frame, config
