"""Motion-vector channels and the frame-by-frame sensor emulator."""
import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from config.settings import Config
from sparsepose.errors import ShapeError
from sparsepose.models.frame import SparseFrame
from sparsepose.models.sparse_tensor import SparseTensor2D
from sparsepose.services.edges import extract_edge

logger = logging.getLogger(__name__)

def search_order(radius):
    """Displacements (dy, dx) within +-radius, nearest first; (0, 0) leads"""
    candidates = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    return np.array(sorted(candidates, key=lambda d: (d[0] ** 2 + d[1] ** 2, d[0], d[1])), dtype=np.int64)

def candidate_blocks(edge_mask, block, min_edge_pixels):
    """(row, col) block indices whose edge-pixel count reaches ``min_edge_pixels``"""
    block_rows, block_cols = edge_mask.shape[0] // block, edge_mask.shape[1] // block
    counts = edge_mask[:block_rows * block, :block_cols * block] \
        .reshape(block_rows, block, block_cols, block).sum(axis=(1, 3))
    return np.argwhere(counts >= min_edge_pixels)

def match_blocks(prev, cur, blocks, block=Config.MV_BLOCK_SIZE, radius=Config.MV_SEARCH_RADIUS):
    """
    Exhaustive block matching

    For each current block the displacement d minimizing the sum of absolute
    differences between ``cur[p]`` and ``prev[p - d]`` is chosen; candidates are
    visited nearest first so ties keep the smaller displacement. Windows leaving
    the previous frame never match.

    Returns:
        tuple: ((n, 2) best (dy, dx), (n,) best SAD, (n,) SAD at zero displacement)
    """
    order = search_order(radius)
    if not len(blocks):
        empty = np.zeros(0)
        return np.zeros((0, 2), dtype=np.int64), empty, empty

    padded = np.pad(np.asarray(prev, dtype=np.float64), radius, constant_values=np.inf)
    windows = sliding_window_view(padded, (block, block))
    tops, lefts = blocks[:, 0] * block, blocks[:, 1] * block
    cur = np.asarray(cur, dtype=np.float64)
    patches = sliding_window_view(cur, (block, block))[tops, lefts]

    sads = np.empty((len(order), len(blocks)))
    for k, (dy, dx) in enumerate(order):
        reference = windows[tops - dy + radius, lefts - dx + radius]
        sads[k] = np.abs(patches - reference).sum(axis=(1, 2))
    best = np.argmin(sads, axis=0)
    return order[best], sads[best, np.arange(len(blocks))], sads[0]

def extract_motion(prev, cur, cur_edge=None, block=Config.MV_BLOCK_SIZE, radius=Config.MV_SEARCH_RADIUS,
                   scale=Config.MV_SCALE, min_edge_pixels=Config.MV_MIN_EDGE_PIXELS):
    """
    MV_X / MV_Y channels between two consecutive frames

    Blocks with enough edge pixels are matched against the previous frame. A block
    moves when its best displacement is nonzero and strictly beats zero
    displacement; its current-frame edge pixels then carry
    ``clamp(round(scale * d), -128, 128)`` (rightward and downward positive).
    Static blocks emit nothing.

    Args:
        prev (np.ndarray | None): Previous 8-bit frame; None gives an empty tensor
        cur (np.ndarray): Current 8-bit frame
        cur_edge (SparseTensor2D, optional): Edge channel of ``cur``; computed if missing
        block (int): Block size
        radius (int): Search radius in pixels
        scale (int): MV units per pixel/frame
        min_edge_pixels (int): Edge pixels a block needs to be matched

    Returns:
        SparseTensor2D: 2-channel int16 tensor (MV_X, MV_Y)
    """
    cur = np.asarray(cur)
    height, width = cur.shape
    if prev is None:
        return SparseTensor2D.empty(height, width, 2, dtype=np.int16)
    prev = np.asarray(prev)
    if prev.shape != cur.shape:
        raise ShapeError(f"Frame shapes differ: {prev.shape} vs {cur.shape}")

    edge = cur_edge if cur_edge is not None else extract_edge(cur)
    edge_mask = edge.site_mask()
    blocks = candidate_blocks(edge_mask, block, min_edge_pixels)
    best, best_sad, zero_sad = match_blocks(prev, cur, blocks, block, radius)
    moving = np.any(best != 0, axis=1) & (best_sad < zero_sad)

    coords, values = [], []
    for (block_row, block_col), (dy, dx) in zip(blocks[moving], best[moving]):
        top, left = block_row * block, block_col * block
        rows, cols = np.nonzero(edge_mask[top:top + block, left:left + block])
        if not len(rows):
            continue
        coords.append(np.stack([rows + top, cols + left], axis=1))
        vector = np.clip(np.rint(scale * np.array([dx, dy], dtype=np.float64)), Config.MV_MIN, Config.MV_MAX)
        values.append(np.repeat(vector[None, :], len(rows), axis=0))

    if not coords:
        return SparseTensor2D.empty(height, width, 2, dtype=np.int16)
    return SparseTensor2D(height, width, 2, np.concatenate(coords), np.concatenate(values).astype(np.int16))


class MotionVectorSensor:
    """Frame-by-frame emulation of the motion vector sensor

    Feeds consecutive grayscale frames and emits SparseFrames; the first frame
    after construction or ``reset`` has empty MV channels.
    """

    def __init__(self, low=Config.EDGE_LOW_THRESHOLD, high=Config.EDGE_HIGH_THRESHOLD,
                 sigma=Config.EDGE_SMOOTHING_SIGMA, block=Config.MV_BLOCK_SIZE,
                 radius=Config.MV_SEARCH_RADIUS, scale=Config.MV_SCALE,
                 min_edge_pixels=Config.MV_MIN_EDGE_PIXELS):
        self.low = low
        self.high = high
        self.sigma = sigma
        self.block = block
        self.radius = radius
        self.scale = scale
        self.min_edge_pixels = min_edge_pixels
        self.reset()

    def reset(self):
        self._previous = None
        self._index = 0

    def settings(self):
        return {
            'edge_low': self.low, 'edge_high': self.high, 'edge_sigma': self.sigma,
            'mv_block': self.block, 'mv_radius': self.radius, 'mv_scale': self.scale,
            'mv_min_edge_pixels': self.min_edge_pixels,
        }

    def process(self, gray):
        """
        Emulate one sensor frame

        Args:
            gray (np.ndarray): H x W 8-bit frame

        Returns:
            SparseFrame: Edge and MV channels of this frame
        """
        gray = np.asarray(gray, dtype=np.uint8)
        edge = extract_edge(gray, self.low, self.high, self.sigma)
        mv = extract_motion(self._previous, gray, edge, self.block, self.radius, self.scale, self.min_edge_pixels)
        frame = SparseFrame(self._index, edge, mv)
        logger.debug(f"Frame {self._index}: {edge.num_sites} edge sites, {mv.num_sites} MV sites")
        self._previous = gray
        self._index += 1
        return frame

    def process_clip(self, frames):
        """Reset and emulate a whole clip"""
        self.reset()
        return [self.process(gray) for gray in frames]
