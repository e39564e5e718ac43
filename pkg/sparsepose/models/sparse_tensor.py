import logging
import struct

import numpy as np

from sparsepose.errors import ShapeError, ValueRangeError

logger = logging.getLogger(__name__)

class SparseTensor2D:
    """Coordinate-indexed multi-channel 2D feature map

    Active sites are kept in canonical row-major order; the coordinate index maps
    the packed key ``row * width + col`` to the site ordinal. Tensors are treated
    as immutable once built and may be shared across threads.
    """

    __slots__ = ('height', 'width', 'channels', 'coords', 'values', 'keys', '_index')

    def __init__(self, height, width, channels, coords, values, _trusted=False):
        """
        Initialize a sparse tensor

        Args:
            height (int): Spatial height in pixels
            width (int): Spatial width in pixels
            channels (int): Number of channels per site
            coords (array-like): (n, 2) integer (row, col) coordinates
            values (array-like): (n, channels) per-site value vectors
            _trusted (bool): Skip validation and sorting; callers guarantee
                canonical, duplicate-free, in-bounds coordinates
        """
        self.height = int(height)
        self.width = int(width)
        self.channels = int(channels)
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
        values = np.asarray(values)
        if values.ndim == 1 and (self.channels == 1 or values.size == 0):
            values = values.reshape(len(coords), self.channels)

        if not _trusted:
            if self.height <= 0 or self.width <= 0 or self.channels < 0:
                raise ShapeError(f"Invalid tensor shape {self.height}x{self.width}x{self.channels}")
            if values.shape != (len(coords), self.channels):
                raise ShapeError(
                    f"Values shape {values.shape} does not match {len(coords)} sites x {self.channels} channels"
                )
            if len(coords):
                rows, cols = coords[:, 0], coords[:, 1]
                if rows.min() < 0 or cols.min() < 0 or rows.max() >= self.height or cols.max() >= self.width:
                    raise ValueRangeError(f"Site coordinates out of bounds for {self.height}x{self.width}")
            keys = coords[:, 0] * self.width + coords[:, 1]
            order = np.argsort(keys, kind='stable')
            keys = keys[order]
            if len(keys) > 1 and np.any(keys[1:] == keys[:-1]):
                raise ShapeError("Duplicate site coordinates")
            coords = coords[order]
            values = values[order]
        else:
            keys = coords[:, 0] * self.width + coords[:, 1]

        coords.setflags(write=False)
        keys.setflags(write=False)
        self.coords = coords
        self.values = values
        self.keys = keys
        self._index = None

    # ------------------------------------------------------------------ builders

    @classmethod
    def empty(cls, height, width, channels, dtype=np.float32):
        """Create a tensor with no active sites"""
        return cls(height, width, channels, np.zeros((0, 2), dtype=np.int64),
                   np.zeros((0, channels), dtype=dtype), _trusted=True)

    @classmethod
    def from_dense(cls, grid, zero_threshold=0.0, shape=None):
        """
        Build a sparse tensor from a dense grid

        Args:
            grid (np.ndarray): H x W x C (or H x W) array
            zero_threshold (float): A site is active iff any channel magnitude exceeds it
            shape (tuple, optional): Declared (H, W, C); checked against the grid

        Returns:
            SparseTensor2D: Tensor holding the active sites verbatim
        """
        grid = np.asarray(grid)
        if grid.ndim == 2:
            grid = grid[:, :, None]
        if grid.ndim != 3:
            raise ShapeError(f"Expected an H x W x C grid, got {grid.ndim} dimensions")
        if shape is not None and tuple(shape) != grid.shape[:len(shape)]:
            raise ShapeError(f"Declared shape {tuple(shape)} does not match grid shape {grid.shape}")
        if zero_threshold < 0:
            raise ValueRangeError("zero_threshold must be >= 0")
        height, width, channels = grid.shape
        if height <= 0 or width <= 0:
            raise ShapeError(f"Grid dimensions must be positive, got {grid.shape}")

        active = np.any(np.abs(grid) > zero_threshold, axis=2)
        rows, cols = np.nonzero(active)  # row-major already
        coords = np.stack([rows, cols], axis=1).astype(np.int64)
        return cls(height, width, channels, coords, grid[rows, cols], _trusted=True)

    @classmethod
    def full(cls, grid):
        """Build a tensor in which every pixel is an active site"""
        grid = np.asarray(grid)
        if grid.ndim == 2:
            grid = grid[:, :, None]
        height, width, channels = grid.shape
        rows, cols = np.divmod(np.arange(height * width, dtype=np.int64), width)
        coords = np.stack([rows, cols], axis=1)
        return cls(height, width, channels, coords, grid.reshape(-1, channels), _trusted=True)

    def with_values(self, values):
        """Return a tensor on the same sites carrying new values (channel count may change)"""
        values = np.asarray(values)
        if values.ndim != 2 or values.shape[0] != len(self.coords):
            raise ShapeError(f"Values shape {values.shape} does not fit {len(self.coords)} sites")
        out = SparseTensor2D.__new__(SparseTensor2D)
        out.height, out.width, out.channels = self.height, self.width, values.shape[1]
        out.coords, out.keys, out.values = self.coords, self.keys, values
        out._index = self._index
        return out

    # ------------------------------------------------------------------ accessors

    @property
    def shape(self):
        return (self.height, self.width, self.channels)

    @property
    def num_sites(self):
        return len(self.coords)

    @property
    def index(self):
        """Coordinate -> site ordinal map"""
        if self._index is None:
            self._index = {(int(r), int(c)): i for i, (r, c) in enumerate(self.coords)}
        return self._index

    def lookup(self, coords):
        """
        Map coordinates to site ordinals

        Args:
            coords (np.ndarray): (m, 2) coordinates, may lie out of bounds

        Returns:
            np.ndarray: (m,) ordinals, -1 where the coordinate is not an active site
        """
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
        rows, cols = coords[:, 0], coords[:, 1]
        inside = (rows >= 0) & (rows < self.height) & (cols >= 0) & (cols < self.width)
        result = np.full(len(coords), -1, dtype=np.int64)
        if not len(self.keys) or not inside.any():
            return result
        keys = rows[inside] * self.width + cols[inside]
        pos = np.searchsorted(self.keys, keys)
        pos_clipped = np.minimum(pos, len(self.keys) - 1)
        found = self.keys[pos_clipped] == keys
        hits = np.where(found, pos_clipped, -1)
        result[inside] = hits
        return result

    def site_mask(self):
        """H x W boolean occupancy grid"""
        mask = np.zeros((self.height, self.width), dtype=bool)
        mask[self.coords[:, 0], self.coords[:, 1]] = True
        return mask

    def same_sites(self, other):
        """True iff both tensors share spatial shape and the exact site set"""
        return (self.height == other.height and self.width == other.width
                and np.array_equal(self.keys, other.keys))

    def to_dense(self):
        """Scatter into an H x W x C grid; inactive positions are exactly zero"""
        grid = np.zeros((self.height, self.width, self.channels), dtype=self.values.dtype)
        if len(self.coords):
            grid[self.coords[:, 0], self.coords[:, 1]] = self.values
        return grid

    def sparsity(self):
        """Fraction of inactive sites, 1 - active / (H * W)"""
        return 1.0 - len(self.coords) / float(self.height * self.width)

    def astype(self, dtype):
        return self.with_values(self.values.astype(dtype))

    def to_bytes(self):
        """Canonical little-endian serialization; identical tensors give identical bytes"""
        values = np.ascontiguousarray(self.values)
        header = struct.pack('<IIIIB', self.height, self.width, self.channels, len(self.coords),
                             len(values.dtype.str))
        return (header + values.dtype.str.encode('ascii')
                + self.coords.astype('<i8').tobytes()
                + values.astype(values.dtype.newbyteorder('<')).tobytes())

    def __eq__(self, other):
        if not isinstance(other, SparseTensor2D):
            return NotImplemented
        return (self.shape == other.shape and self.same_sites(other)
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def __repr__(self):
        return (f"SparseTensor2D({self.height}x{self.width}x{self.channels}, "
                f"sites={len(self.coords)}, sparsity={self.sparsity():.4f})")


def from_dense(grid, zero_threshold=0.0, shape=None):
    """Build a SparseTensor2D from a dense H x W x C grid"""
    return SparseTensor2D.from_dense(grid, zero_threshold=zero_threshold, shape=shape)

def to_dense(tensor):
    """Scatter a SparseTensor2D into a dense H x W x C grid"""
    return tensor.to_dense()

def sparsity(tensor):
    """Fraction of inactive sites of a SparseTensor2D"""
    return tensor.sparsity()

def resize_sites(tensor, out_height, out_width):
    """
    Resize a sparse tensor by coordinate scaling

    Each site moves to ``floor(row * out_height / height), floor(col * out_width / width)``.
    When several sites land on one output site, each channel keeps the value of
    largest magnitude (the earliest site in canonical order on ties), so the
    result stays a valid, sparse sensor-style tensor.

    Args:
        tensor (SparseTensor2D): Input tensor
        out_height (int): Target height
        out_width (int): Target width

    Returns:
        SparseTensor2D: The resized tensor
    """
    if (out_height, out_width) == (tensor.height, tensor.width):
        return tensor
    if not tensor.num_sites:
        return SparseTensor2D.empty(out_height, out_width, tensor.channels, dtype=tensor.values.dtype)

    rows = (tensor.coords[:, 0] * out_height) // tensor.height
    cols = (tensor.coords[:, 1] * out_width) // tensor.width
    keys = rows * out_width + cols
    unique_keys, inverse = np.unique(keys, return_inverse=True)
    inverse = inverse.reshape(-1)

    values = np.zeros((len(unique_keys), tensor.channels), dtype=tensor.values.dtype)
    for channel in range(tensor.channels):
        column = tensor.values[:, channel]
        magnitude = np.abs(column.astype(np.float64))
        # sort by output key, then descending magnitude, then canonical order
        order = np.lexsort((np.arange(len(column)), -magnitude, inverse))
        winners = order[np.r_[0, np.flatnonzero(np.diff(inverse[order])) + 1]]
        values[inverse[winners], channel] = column[winners]

    coords = np.stack(np.divmod(unique_keys, out_width), axis=1)
    return SparseTensor2D(out_height, out_width, tensor.channels, coords, values, _trusted=True)
