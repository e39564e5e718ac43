"""Dense reference engine.

Plain zero-padded cross-correlation on H x W x C grids. Stride-1 kernels are
centered; strided and transposed kernels are anchored at the window origin, the
same geometry the sparse rulebooks use, so the two engines compute one function
once the sparse active mask is applied.
"""
import logging

import numpy as np

from sparsepose.errors import ShapeError

logger = logging.getLogger(__name__)

def _output_size(size, kernel, stride):
    return size if stride == 1 else -(-size // stride)

def _check_grid(grid, params):
    grid = np.asarray(grid)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    if grid.ndim != 3:
        raise ShapeError(f"Expected an H x W x C grid, got shape {grid.shape}")
    if grid.shape[2] != params.in_channels:
        raise ShapeError(f"Grid has {grid.shape[2]} channels, layer expects {params.in_channels}")
    return grid

def dense_conv_forward(grid, params, stride=1):
    """
    Textbook convolution (cross-correlation) of a dense grid

    Args:
        grid (np.ndarray): H x W x Cin input
        params (ConvParams): kh x kw x Cin x Cout weights and bias
        stride (int): 1 keeps H x W (centered kernel, zero padding); s >= 2 anchors
            windows at ``s * q`` and gives ceil(H / s) x ceil(W / s)

    Returns:
        np.ndarray: Hout x Wout x Cout output grid
    """
    grid = _check_grid(grid, params)
    height, width, _ = grid.shape
    kh, kw = params.kernel_height, params.kernel_width
    out_h, out_w = _output_size(height, kh, stride), _output_size(width, kw, stride)
    top, left = ((kh - 1) // 2, (kw - 1) // 2) if stride == 1 else (0, 0)
    bottom = max(0, (out_h - 1) * stride + kh - top - height)
    right = max(0, (out_w - 1) * stride + kw - left - width)
    padded = np.pad(grid, ((top, bottom), (left, right), (0, 0)))

    dtype = np.result_type(grid.dtype, params.dtype)
    out = np.empty((out_h, out_w, params.out_channels), dtype=dtype)
    out[...] = params.bias
    row_span, col_span = stride * (out_h - 1) + 1, stride * (out_w - 1) + 1
    for a in range(kh):
        for b in range(kw):
            window = padded[a:a + row_span:stride, b:b + col_span:stride]
            out += window @ params.weight[a, b]
    return out

def dense_transposed_conv_forward(grid, params, stride, out_shape):
    """
    Transposed convolution mirroring the anchored strided geometry

    The fine position ``stride * q + (a, b)`` receives ``grid[q] @ W[a, b]``.

    Args:
        grid (np.ndarray): Coarse Hc x Wc x Cin grid
        params (ConvParams): Weights
        stride (int): Stride of the matching strided convolution
        out_shape (tuple): Fine (H, W)

    Returns:
        np.ndarray: H x W x Cout output grid
    """
    grid = _check_grid(grid, params)
    coarse_h, coarse_w, _ = grid.shape
    height, width = out_shape
    if (-(-height // stride), -(-width // stride)) != (coarse_h, coarse_w):
        raise ShapeError(f"Fine shape {out_shape} does not reduce to {grid.shape[:2]} at stride {stride}")
    kh, kw = params.kernel_height, params.kernel_width

    dtype = np.result_type(grid.dtype, params.dtype)
    full = np.zeros(((coarse_h - 1) * stride + kh, (coarse_w - 1) * stride + kw, params.out_channels), dtype=dtype)
    row_span, col_span = stride * (coarse_h - 1) + 1, stride * (coarse_w - 1) + 1
    for a in range(kh):
        for b in range(kw):
            full[a:a + row_span:stride, b:b + col_span:stride] += grid @ params.weight[a, b]
    out = np.zeros((height, width, params.out_channels), dtype=dtype)
    rows, cols = min(height, full.shape[0]), min(width, full.shape[1])
    out[:rows, :cols] = full[:rows, :cols]
    out += params.bias
    return out

def occupancy_pool(mask, kernel_height, kernel_width, stride):
    """
    OR-pool an occupancy mask with anchored windows

    Returns:
        np.ndarray: ceil(H / s) x ceil(W / s) boolean mask; q is set iff some
        ``stride * q + d`` inside the window is set
    """
    height, width = mask.shape
    out_h, out_w = -(-height // stride), -(-width // stride)
    bottom = max(0, (out_h - 1) * stride + kernel_height - height)
    right = max(0, (out_w - 1) * stride + kernel_width - width)
    padded = np.pad(mask, ((0, bottom), (0, right)))
    out = np.zeros((out_h, out_w), dtype=bool)
    row_span, col_span = stride * (out_h - 1) + 1, stride * (out_w - 1) + 1
    for a in range(kernel_height):
        for b in range(kernel_width):
            out |= padded[a:a + row_span:stride, b:b + col_span:stride]
    return out

def dense_norm_forward(grid, params, mask=None):
    """Inference-mode normalization with running statistics, zero outside ``mask``"""
    dtype = np.result_type(grid.dtype, params.dtype)
    inv_std = 1.0 / np.sqrt(params.running_var.astype(dtype) + params.epsilon)
    out = (grid - params.running_mean) * inv_std * params.gamma + params.beta
    return out if mask is None else out * mask[:, :, None]

def dense_relu_forward(grid):
    return np.maximum(grid, 0)
