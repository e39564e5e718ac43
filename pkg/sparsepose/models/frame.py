import logging

import numpy as np

from config.settings import Config
from sparsepose.errors import ShapeError, ValueRangeError
from sparsepose.models.sparse_tensor import SparseTensor2D

logger = logging.getLogger(__name__)

class SparseFrame:
    """One sensor time frame: edge channel plus MV_X / MV_Y channels"""

    EDGE_DTYPE = np.uint8
    MV_DTYPE = np.int16

    def __init__(self, index, edge, mv):
        """
        Initialize a sparse frame

        Args:
            index (int): Timestamp index within the clip
            edge (SparseTensor2D): 1-channel edge intensities in [0, 255]
            mv (SparseTensor2D): 2-channel (MV_X, MV_Y) integer motion vectors in [-128, 128]
        """
        if edge.channels != 1:
            raise ShapeError(f"Edge tensor must have 1 channel, got {edge.channels}")
        if mv.channels != 2:
            raise ShapeError(f"MV tensor must have 2 channels, got {mv.channels}")
        if (edge.height, edge.width) != (mv.height, mv.width):
            raise ShapeError(f"Edge {edge.height}x{edge.width} and MV {mv.height}x{mv.width} resolutions differ")

        edge_values = np.asarray(edge.values)
        mv_values = np.asarray(mv.values)
        if edge_values.size and (edge_values.min() < Config.EDGE_MIN or edge_values.max() > Config.EDGE_MAX):
            raise ValueRangeError(f"Edge value outside [{Config.EDGE_MIN}, {Config.EDGE_MAX}] in frame {index}")
        if mv_values.size:
            if mv_values.min() < Config.MV_MIN or mv_values.max() > Config.MV_MAX:
                raise ValueRangeError(f"MV value outside [{Config.MV_MIN}, {Config.MV_MAX}] in frame {index}")
            if not np.array_equal(mv_values, np.round(mv_values)):
                raise ValueRangeError(f"MV values must be integers (frame {index})")

        self.index = int(index)
        self.edge = edge if edge_values.dtype == self.EDGE_DTYPE else edge.with_values(edge_values.astype(self.EDGE_DTYPE))
        self.mv = mv if mv_values.dtype == self.MV_DTYPE else mv.with_values(mv_values.astype(self.MV_DTYPE))

    @classmethod
    def empty(cls, index, height=Config.NATIVE_HEIGHT, width=Config.NATIVE_WIDTH):
        return cls(index, SparseTensor2D.empty(height, width, 1, dtype=cls.EDGE_DTYPE),
                   SparseTensor2D.empty(height, width, 2, dtype=cls.MV_DTYPE))

    @property
    def height(self):
        return self.edge.height

    @property
    def width(self):
        return self.edge.width

    @property
    def resolution(self):
        return (self.height, self.width)

    def sparsity(self):
        """Per-channel-group sparsity: edge, mv and their union"""
        union = np.union1d(self.edge.keys, self.mv.keys)
        return {
            'edge': self.edge.sparsity(),
            'mv': self.mv.sparsity(),
            'fusion': 1.0 - len(union) / float(self.height * self.width),
        }

    def __eq__(self, other):
        if not isinstance(other, SparseFrame):
            return NotImplemented
        return self.index == other.index and self.edge == other.edge and self.mv == other.mv

    __hash__ = None

    def __repr__(self):
        return (f"SparseFrame({self.index}, {self.height}x{self.width}, "
                f"edge_sites={self.edge.num_sites}, mv_sites={self.mv.num_sites})")
