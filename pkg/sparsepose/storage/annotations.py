import logging

import pandas as pd

from config.settings import Config
from sparsepose.errors import DataError
from sparsepose.models.pose import JOINT_NAMES, PoseAnnotation
from sparsepose.storage.reports import read_table, write_table

logger = logging.getLogger(__name__)

ANNOTATION_COLUMNS = ['frame_id', 'camera_id', 'action_id'] + [
    f'{name}_{field}' for name in JOINT_NAMES for field in ('row', 'col', 'vis')
]

def write_annotations(annotations, path, config=None):
    """Write PoseAnnotations, one row per frame"""
    frame = pd.DataFrame([a.to_dict() for a in annotations], columns=ANNOTATION_COLUMNS)
    write_table(frame, path, config=config)

def read_annotations(path, resolution=(Config.NATIVE_HEIGHT, Config.NATIVE_WIDTH)):
    """
    Read an annotation file

    Returns:
        tuple: (list of PoseAnnotation ordered by frame_id, config dict)
    """
    frame, config = read_table(path)
    missing = [c for c in ANNOTATION_COLUMNS if c not in frame.columns]
    if missing:
        raise DataError(f"{path}: missing annotation columns {missing[:3]}")
    frame = frame.sort_values('frame_id', kind='stable')
    annotations = [PoseAnnotation.from_dict(row, resolution=resolution) for row in frame.to_dict('records')]
    logger.info(f"Read {len(annotations)} annotations from {path}")
    return annotations, config

SPLIT_COLUMNS = ['frame_id', 'split']

def write_split(assignments, path, config=None):
    """
    Write a frame split file

    Args:
        assignments (dict): frame_id -> split name (e.g. train / test)
    """
    frame = pd.DataFrame(sorted(assignments.items()), columns=SPLIT_COLUMNS)
    write_table(frame, path, config=config)

def read_split(path, split_name):
    """Frame ids assigned to ``split_name``"""
    frame, _ = read_table(path)
    if list(frame.columns) != SPLIT_COLUMNS:
        raise DataError(f"{path}: split file needs columns {SPLIT_COLUMNS}")
    frame_ids = frame.loc[frame['split'] == split_name, 'frame_id'].astype(int).tolist()
    if not frame_ids:
        raise DataError(f"{path}: no frames in split '{split_name}'")
    return frame_ids
