import logging

import numpy as np

from config.settings import Config
from sparsepose.models.pose import SpeedClass

logger = logging.getLogger(__name__)

def joint_errors(pred, truth, scale_to=None):
    """
    Per-joint Euclidean errors

    Args:
        pred (PoseAnnotation): Prediction
        truth (PoseAnnotation): Ground truth
        scale_to (tuple, optional): (H, W) to measure in; defaults to the truth's resolution

    Returns:
        np.ndarray: (13,) distances, NaN where the truth joint is not visible
    """
    height, width = scale_to or truth.resolution
    pred_joints = pred.rescaled(height, width).joints
    truth_joints = truth.rescaled(height, width).joints
    errors = np.linalg.norm(pred_joints - truth_joints, axis=1)
    errors[~truth.visible] = np.nan
    return errors

def mpjpe(pred, truth, scale_to=None):
    """
    Mean per-joint position error over the truth's visible joints

    Returns:
        float | None: The error, or None when no truth joint is visible
    """
    if not truth.visible.any():
        logger.debug(f"Frame {truth.frame_id}: no visible joints, MPJPE undefined")
        return None
    errors = joint_errors(pred, truth, scale_to)
    return float(np.nanmean(errors))

def joint_displacements(prev, cur, native=(Config.NATIVE_HEIGHT, Config.NATIVE_WIDTH)):
    """
    Per-joint displacement between consecutive frames at native resolution

    Returns:
        np.ndarray: (13,) pixels per frame, NaN where either frame lacks the joint
    """
    moved = cur.rescaled(*native).joints - prev.rescaled(*native).joints
    displacement = np.linalg.norm(moved, axis=1)
    displacement[~(prev.visible & cur.visible)] = np.nan
    return displacement

def classify_speed(prev, cur, slow_below=Config.SPEED_SLOW_BELOW, fast_above=Config.SPEED_FAST_ABOVE):
    """
    Per-joint speed class of the current frame

    Args:
        prev (PoseAnnotation | None): Previous frame; None excludes every joint
        cur (PoseAnnotation): Current frame

    Returns:
        list: 13 SpeedClass values, None for excluded joints
    """
    if prev is None:
        return [None] * len(cur.visible)
    displacement = joint_displacements(prev, cur)
    return [None if np.isnan(d) else SpeedClass.of(d, slow_below, fast_above) for d in displacement]
