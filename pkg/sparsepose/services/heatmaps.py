import logging
import math

import numpy as np

from config.settings import Config
from sparsepose.errors import ShapeError
from sparsepose.models.pose import JOINT_NAMES, PoseAnnotation

logger = logging.getLogger(__name__)

def target_pixels(ann, shape=(Config.INPUT_HEIGHT, Config.INPUT_WIDTH)):
    """
    Integer heatmap pixels of the visible joints

    Args:
        ann (PoseAnnotation): Annotation at any resolution
        shape (tuple): Heatmap (H, W)

    Returns:
        tuple: ((13, 2) int pixels, (13,) bool mask of joints clamped into the grid)
    """
    height, width = shape
    scaled = ann.rescaled(height, width).joints
    pixels = np.floor(scaled + 0.5).astype(np.int64)
    clamped_pixels = np.stack([np.clip(pixels[:, 0], 0, height - 1), np.clip(pixels[:, 1], 0, width - 1)], axis=1)
    clamped = ann.visible & np.any(clamped_pixels != pixels, axis=1)
    if clamped.any():
        names = [JOINT_NAMES[i] for i in np.flatnonzero(clamped)]
        logger.warning(f"Frame {ann.frame_id}: clamped out-of-bounds joints {names} into {height}x{width}")
    return clamped_pixels, clamped

def make_target_heatmaps(ann, shape=(Config.INPUT_HEIGHT, Config.INPUT_WIDTH),
                         sigma=Config.HEATMAP_SIGMA, truncate=Config.HEATMAP_TRUNCATE, dtype=np.float32):
    """
    Gaussian target heatmaps of one annotation

    Each visible joint is an impulse blurred by a Gaussian of std ``sigma``,
    truncated at ``truncate * sigma`` and renormalized to a peak of exactly 1.

    Args:
        ann (PoseAnnotation): Ground truth
        shape (tuple): Heatmap (H, W)
        sigma (float): Gaussian std in heatmap pixels
        truncate (float): Support radius in units of sigma

    Returns:
        np.ndarray: H x W x 13 grid; invisible joints give all-zero channels
    """
    height, width = shape
    heatmaps = np.zeros((height, width, len(JOINT_NAMES)), dtype=dtype)
    pixels, _ = target_pixels(ann, shape)
    radius = int(math.ceil(truncate * sigma))
    offsets = np.arange(-radius, radius + 1)
    profile = np.exp(-(offsets.astype(np.float64) ** 2) / (2.0 * sigma ** 2))
    kernel = np.outer(profile, profile)

    for j in np.flatnonzero(ann.visible):
        row, col = pixels[j]
        top, bottom = max(0, row - radius), min(height, row + radius + 1)
        left, right = max(0, col - radius), min(width, col + radius + 1)
        heatmaps[top:bottom, left:right, j] = kernel[top - row + radius:bottom - row + radius,
                                                     left - col + radius:right - col + radius]
    return heatmaps

def mse_loss(pred, target):
    """
    Mean squared error over every pixel and channel (and batch item)

    Args:
        pred (np.ndarray | list): Predicted heatmaps
        target (np.ndarray | list): Targets of identical shape

    Returns:
        tuple: (loss as float, gradient 2 * (pred - target) / count with pred's shape)
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction shape {pred.shape} does not match target shape {target.shape}")
    if not pred.size:
        raise ShapeError("Empty prediction")
    diff = pred.astype(np.float64) - target
    loss = float(np.mean(diff ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(np.result_type(pred.dtype, np.float32))

def decode_joints(heatmaps, frame_id=0, camera_id=0, action_id=0):
    """
    Per-channel argmax decoding

    Ties go to the smallest row, then the smallest column. A joint is visible
    iff its channel maximum is positive.

    Args:
        heatmaps (np.ndarray): H x W x 13 grid

    Returns:
        PoseAnnotation: Joints at heatmap resolution
    """
    heatmaps = np.asarray(heatmaps)
    if heatmaps.ndim != 3 or heatmaps.shape[2] != len(JOINT_NAMES):
        raise ShapeError(f"Expected H x W x {len(JOINT_NAMES)} heatmaps, got {heatmaps.shape}")
    height, width, channels = heatmaps.shape
    flat = heatmaps.reshape(height * width, channels)
    best = np.argmax(flat, axis=0)
    rows, cols = np.divmod(best, width)
    visible = flat[best, np.arange(channels)] > 0
    return PoseAnnotation(np.stack([rows, cols], axis=1), visible, (height, width),
                          frame_id=frame_id, camera_id=camera_id, action_id=action_id, validate=False)

def reachable_floor(pairs):
    """
    Lowest MSE a scatter head can reach: target energy at inactive sites

    Args:
        pairs (iterable): (SparseTensor2D input, H x W x 13 target) pairs; consumed lazily

    Returns:
        float: Mean over all elements of the target squared outside the active sets
    """
    total, count = 0.0, 0
    for x, target in pairs:
        outside = ~x.site_mask()
        total += float(np.sum(np.asarray(target, dtype=np.float64)[outside] ** 2))
        count += target.size
    return total / count if count else 0.0
