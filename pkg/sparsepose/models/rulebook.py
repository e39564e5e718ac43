import logging

import numpy as np

from sparsepose.errors import ShapeError

logger = logging.getLogger(__name__)

class Rulebook:
    """Per-kernel-offset (input site, output site) pairs driving gather-multiply-scatter

    Offsets are stored in row-major kernel order, so offset ordinal ``k`` addresses
    ``weight[k // kernel_width, k % kernel_width]``. Within one offset every input
    ordinal and every output ordinal appears at most once, which lets the convolution
    kernels scatter with plain fancy-index accumulation.
    """

    SUBMANIFOLD = 'submanifold'
    STRIDED = 'strided'
    TRANSPOSED = 'transposed'

    def __init__(self, kind, kernel_height, kernel_width, stride, offsets, pairs,
                 in_coords, out_coords, in_shape, out_shape):
        """
        Initialize a rulebook

        Args:
            kind (str): SUBMANIFOLD, STRIDED or TRANSPOSED
            kernel_height (int): Kernel rows
            kernel_width (int): Kernel columns
            stride (int): Spatial stride (1 for submanifold)
            offsets (np.ndarray): (K, 2) kernel offsets (dr, dc)
            pairs (list): K tuples of (input ordinals, output ordinals) int64 arrays
            in_coords (np.ndarray): Canonical input site coordinates
            out_coords (np.ndarray): Canonical output site coordinates
            in_shape (tuple): (H, W) of the input grid
            out_shape (tuple): (H, W) of the output grid
        """
        self.kind = kind
        self.kernel_height = kernel_height
        self.kernel_width = kernel_width
        self.stride = stride
        self.offsets = offsets
        self.pairs = tuple(pairs)
        self.in_coords = in_coords
        self.out_coords = out_coords
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(out_shape)

    @property
    def num_offsets(self):
        return len(self.pairs)

    @property
    def num_in(self):
        return len(self.in_coords)

    @property
    def num_out(self):
        return len(self.out_coords)

    @property
    def num_pairs(self):
        return int(sum(len(i) for i, _ in self.pairs))

    @property
    def pairs_per_offset(self):
        """Pairs as plain (input, output) tuples grouped by offset"""
        return [list(zip(i.tolist(), o.tolist())) for i, o in self.pairs]

    def matches_input(self, tensor):
        """True iff the rulebook was built over this tensor's site set"""
        return (tensor.height, tensor.width) == self.in_shape and np.array_equal(tensor.coords, self.in_coords)

    def matches_output(self, tensor):
        return (tensor.height, tensor.width) == self.out_shape and np.array_equal(tensor.coords, self.out_coords)

    def transpose(self):
        """Swap the roles of input and output sites (strided -> transposed)"""
        return Rulebook(
            kind=self.TRANSPOSED if self.kind == self.STRIDED else self.kind,
            kernel_height=self.kernel_height,
            kernel_width=self.kernel_width,
            stride=self.stride,
            offsets=self.offsets,
            pairs=[(o, i) for i, o in self.pairs],
            in_coords=self.out_coords,
            out_coords=self.in_coords,
            in_shape=self.out_shape,
            out_shape=self.in_shape,
        )

    def __repr__(self):
        return (f"Rulebook({self.kind}, {self.kernel_height}x{self.kernel_width}, stride={self.stride}, "
                f"in={self.num_in}, out={self.num_out}, pairs={self.num_pairs})")


def _kernel_offsets(kernel_height, kernel_width, centered):
    rows, cols = np.meshgrid(np.arange(kernel_height), np.arange(kernel_width), indexing='ij')
    offsets = np.stack([rows.ravel(), cols.ravel()], axis=1).astype(np.int64)
    if centered:
        offsets -= np.array([(kernel_height - 1) // 2, (kernel_width - 1) // 2], dtype=np.int64)
    return offsets

def build_submanifold_rulebook(tensor, kernel_height, kernel_width):
    """
    Build the submanifold rulebook of a tensor

    For output site p and centered offset d, a pair exists iff p + d is active.
    The output site set is the input site set.

    Args:
        tensor (SparseTensor2D): Input tensor (only its sites are used)
        kernel_height (int): Odd kernel height
        kernel_width (int): Odd kernel width

    Returns:
        Rulebook: The submanifold rulebook
    """
    if kernel_height < 1 or kernel_width < 1 or kernel_height % 2 == 0 or kernel_width % 2 == 0:
        raise ShapeError(f"Submanifold kernels must be odd, got {kernel_height}x{kernel_width}")

    offsets = _kernel_offsets(kernel_height, kernel_width, centered=True)
    ordinals = np.arange(tensor.num_sites, dtype=np.int64)
    pairs = []
    for offset in offsets:
        if not offset.any():
            pairs.append((ordinals, ordinals))
            continue
        source = tensor.lookup(tensor.coords + offset)
        hit = source >= 0
        pairs.append((source[hit], ordinals[hit]))

    shape = (tensor.height, tensor.width)
    return Rulebook(Rulebook.SUBMANIFOLD, kernel_height, kernel_width, 1, offsets, pairs,
                    tensor.coords, tensor.coords, shape, shape)

def build_strided_rulebook(tensor, kernel_height, kernel_width, stride):
    """
    Build a strided rulebook and the coarse active set

    Output site q is active iff some offset d in the kernel window makes
    ``stride * q + d`` an active input site (occupancy OR-pooling). The output grid
    is ceil(H / stride) x ceil(W / stride).

    Args:
        tensor (SparseTensor2D): Input tensor
        kernel_height (int): Window rows
        kernel_width (int): Window columns
        stride (int): Stride, at least 2

    Returns:
        tuple: (Rulebook, (n, 2) output coordinates in canonical order)
    """
    if stride < 2:
        raise ShapeError(f"Strided rulebooks need stride >= 2, got {stride}")
    if kernel_height < 1 or kernel_width < 1:
        raise ShapeError(f"Invalid kernel {kernel_height}x{kernel_width}")
    if kernel_height < stride or kernel_width < stride:
        logger.warning(f"Kernel {kernel_height}x{kernel_width} smaller than stride {stride}; some inputs are skipped")

    out_height = -(-tensor.height // stride)
    out_width = -(-tensor.width // stride)
    offsets = _kernel_offsets(kernel_height, kernel_width, centered=False)

    candidates = []
    for offset in offsets:
        shifted = tensor.coords - offset
        valid = np.all(shifted >= 0, axis=1) & np.all(shifted % stride == 0, axis=1)
        coarse = shifted // stride
        valid &= (coarse[:, 0] < out_height) & (coarse[:, 1] < out_width)
        candidates.append((np.flatnonzero(valid), coarse[valid, 0] * out_width + coarse[valid, 1]))

    all_keys = np.concatenate([keys for _, keys in candidates]) if candidates else np.zeros(0, np.int64)
    out_keys = np.unique(all_keys)
    out_coords = np.stack(np.divmod(out_keys, out_width), axis=1).astype(np.int64).reshape(-1, 2)

    pairs = [(inputs.astype(np.int64), np.searchsorted(out_keys, keys).astype(np.int64))
             for inputs, keys in candidates]

    rulebook = Rulebook(Rulebook.STRIDED, kernel_height, kernel_width, stride, offsets, pairs,
                        tensor.coords, out_coords, (tensor.height, tensor.width), (out_height, out_width))
    return rulebook, out_coords
