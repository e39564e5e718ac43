import logging

import numpy as np
import pandas as pd

from config.settings import Config
from sparsepose.models.pose import JOINT_NAMES, SpeedClass
from sparsepose.services import model as model_service
from sparsepose.services.heatmaps import decode_joints
from sparsepose.services.metrics import classify_speed, joint_errors

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ['backbone', 'input_modality', 'conv_mode', 'class', 'speed', 'mpjpe', 'n_joints', 'mpjpe_native']
ALL = 'all'

def joint_records(graph, samples, conv_mode=model_service.SPARSE, batch_size=4):
    """
    Per-joint evaluation records

    Returns:
        pd.DataFrame: One row per (frame, visible truth joint) with the error at
        heatmap resolution, the error at native resolution, the action class and
        the speed class (None without a previous frame)
    """
    rows = []
    skipped = 0
    native = (Config.NATIVE_HEIGHT, Config.NATIVE_WIDTH)
    for start in range(0, len(samples), batch_size):
        batch = samples[start:start + batch_size]
        heatmaps = model_service.forward(graph, [s.x for s in batch], mode=conv_mode)
        for sample, grid in zip(batch, heatmaps):
            truth = sample.annotation
            if not truth.visible.any():
                skipped += 1
                logger.warning(f"Frame {truth.frame_id}: no visible joints, skipped")
                continue
            pred = decode_joints(grid, frame_id=truth.frame_id)
            errors = joint_errors(pred, truth, scale_to=grid.shape[:2])
            errors_native = joint_errors(pred, truth, scale_to=native)
            speeds = classify_speed(sample.previous, truth)
            for j in np.flatnonzero(truth.visible):
                rows.append({
                    'frame_id': truth.frame_id,
                    'joint': JOINT_NAMES[j],
                    'class': sample.action_class or ALL,
                    'speed': speeds[j],
                    'error': float(errors[j]),
                    'error_native': float(errors_native[j]),
                })
    if skipped:
        logger.warning(f"{skipped} frame(s) without visible joints were skipped")
    return pd.DataFrame(rows, columns=['frame_id', 'joint', 'class', 'speed', 'error', 'error_native'])

def _bucket(records, class_name, speed):
    return {
        'class': class_name,
        'speed': speed,
        'mpjpe': float(records['error'].mean()) if len(records) else np.nan,
        'n_joints': int(len(records)),
        'mpjpe_native': float(records['error_native'].mean()) if len(records) else np.nan,
    }

def summarize(records, backbone, modality, conv_mode):
    """
    Aggregate joint records into the report table

    Rows: overall, per action class, per speed class and per (class, speed).
    Bucket means recombine to the overall mean weighted by ``n_joints``.
    """
    buckets = [_bucket(records, ALL, ALL)]
    classes = sorted(c for c in records['class'].dropna().unique() if c != ALL)
    for class_name, group in records[records['class'].isin(classes)].groupby('class', sort=True):
        buckets.append(_bucket(group, class_name, ALL))
    with_speed = records[records['speed'].notna()]
    for speed in SpeedClass.ALL:
        buckets.append(_bucket(with_speed[with_speed['speed'] == speed], ALL, speed))
    for (class_name, speed), group in with_speed[with_speed['class'].isin(classes)].groupby(['class', 'speed']):
        buckets.append(_bucket(group, class_name, speed))

    report = pd.DataFrame(buckets)
    report.insert(0, 'conv_mode', conv_mode)
    report.insert(0, 'input_modality', modality)
    report.insert(0, 'backbone', backbone)
    return report[REPORT_COLUMNS]

def evaluate(graph, samples, backbone=None, modality=None, conv_mode=model_service.SPARSE, batch_size=4):
    """
    Evaluate a model on prepared samples

    Args:
        graph (ModelGraph): Trained model
        samples (list): Sample objects
        backbone (str): Backbone name for the report rows
        modality (str): Input modality for the report rows
        conv_mode (str): sparse or dense

    Returns:
        pd.DataFrame: Report with columns REPORT_COLUMNS
    """
    backbone = backbone or graph.spec.name
    records = joint_records(graph, samples, conv_mode=conv_mode, batch_size=batch_size)
    report = summarize(records, backbone, modality, conv_mode)
    overall = report.iloc[0]
    logger.info(f"{backbone}/{modality}/{conv_mode}: MPJPE {overall['mpjpe']:.3f} px "
                f"({overall['mpjpe_native']:.3f} native) over {overall['n_joints']} joints")
    return report
