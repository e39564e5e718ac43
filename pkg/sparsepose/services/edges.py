"""Canny-like edge channel of the motion vector sensor emulator."""
import logging

import numpy as np
from scipy import ndimage

from config.settings import Config
from sparsepose.models.sparse_tensor import SparseTensor2D

logger = logging.getLogger(__name__)

# Neighbour offsets along the gradient for the four quantized directions:
# 0 horizontal, 1 diagonal down-right, 2 vertical, 3 diagonal down-left
_DIRECTION_OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1))

# A 3x3 Sobel pair on a unit step yields 4x the step height
_SOBEL_GAIN = 4.0

def _shift(grid, dr, dc):
    """grid[r + dr, c + dc] with zero fill outside"""
    out = np.zeros_like(grid)
    height, width = grid.shape
    src_r = slice(max(dr, 0), height + min(dr, 0))
    dst_r = slice(max(-dr, 0), height + min(-dr, 0))
    src_c = slice(max(dc, 0), width + min(dc, 0))
    dst_c = slice(max(-dc, 0), width + min(-dc, 0))
    out[dst_r, dst_c] = grid[src_r, src_c]
    return out

def gradient(gray, sigma=Config.EDGE_SMOOTHING_SIGMA):
    """
    Smoothed Sobel gradient

    Returns:
        tuple: (magnitude on the 0-255 scale, direction index 0-3 per pixel)
    """
    smoothed = ndimage.gaussian_filter(np.asarray(gray, dtype=np.float64), sigma) if sigma > 0 \
        else np.asarray(gray, dtype=np.float64)
    grad_rows = ndimage.sobel(smoothed, axis=0)
    grad_cols = ndimage.sobel(smoothed, axis=1)
    magnitude = np.hypot(grad_rows, grad_cols) / _SOBEL_GAIN
    angle = np.arctan2(grad_rows, grad_cols)
    direction = np.rint(angle / (np.pi / 4)).astype(np.int64) % 4
    return magnitude, direction

def non_max_suppression(magnitude, direction):
    """
    Thin ridges to one pixel across the gradient

    A pixel survives if it is >= its forward neighbour and > its backward
    neighbour along the gradient, so a two-pixel plateau keeps exactly one.
    """
    keep = np.zeros(magnitude.shape, dtype=bool)
    for index, (dr, dc) in enumerate(_DIRECTION_OFFSETS):
        forward = _shift(magnitude, dr, dc)
        backward = _shift(magnitude, -dr, -dc)
        keep |= (direction == index) & (magnitude >= forward) & (magnitude > backward)
    return keep & (magnitude > 0)

def hysteresis(candidates, magnitude, low, high):
    """Keep 8-connected weak components that contain a strong pixel"""
    weak = candidates & (magnitude >= low)
    labels, count = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if not count:
        return weak
    strong_labels = np.unique(labels[weak & (magnitude >= high)])
    strong_labels = strong_labels[strong_labels > 0]
    return np.isin(labels, strong_labels)

def extract_edge(gray, low=Config.EDGE_LOW_THRESHOLD, high=Config.EDGE_HIGH_THRESHOLD,
                 sigma=Config.EDGE_SMOOTHING_SIGMA):
    """
    Edge channel of one grayscale frame

    Gaussian smoothing, Sobel gradient, non-maximum suppression and hysteresis
    thresholds on the 0-255 gradient magnitude. Surviving pixels carry their
    magnitude rounded and clipped to [1, 255]; every other pixel is inactive.

    Args:
        gray (np.ndarray): H x W 8-bit frame
        low (float): Hysteresis low threshold
        high (float): Hysteresis high threshold
        sigma (float): Smoothing std in pixels

    Returns:
        SparseTensor2D: 1-channel uint8 edge tensor
    """
    gray = np.asarray(gray)
    if low > high:
        logger.warning(f"Edge low threshold {low} above high threshold {high}; swapping")
        low, high = high, low
    magnitude, direction = gradient(gray, sigma)
    edges = hysteresis(non_max_suppression(magnitude, direction), magnitude, low, high)

    rows, cols = np.nonzero(edges)
    values = np.clip(np.rint(magnitude[rows, cols]), Config.EDGE_MIN + 1, Config.EDGE_MAX).astype(np.uint8)
    coords = np.stack([rows, cols], axis=1).astype(np.int64)
    return SparseTensor2D(gray.shape[0], gray.shape[1], 1, coords, values.reshape(-1, 1), _trusted=True)
