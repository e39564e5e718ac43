"""Differentiable layers over sparse tensors.

Every layer works on a mini-batch given as a list of SparseTensor2D. ``forward``
returns the outputs together with an ``OpContext`` that ``backward`` consumes;
layers keep no per-call state, so one layer object can serve concurrent
forward passes. Parameter gradients accumulate into the parameter objects.
"""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from sparsepose.errors import ContextError, ShapeError
from sparsepose.models.rulebook import Rulebook
from sparsepose.models.sparse_tensor import SparseTensor2D

logger = logging.getLogger(__name__)

# Relaxed mode lets per-offset products run on a thread pool and accumulate in
# completion order; results then match the default order to ~1e-4 only.
_relaxed_workers = 0

def set_relaxed_accumulation(workers):
    """
    Enable (workers > 0) or disable (0) relaxed, multi-threaded accumulation

    Args:
        workers (int): Thread pool size; 0 restores deterministic execution
    """
    global _relaxed_workers
    _relaxed_workers = max(0, int(workers))
    logger.info(f"Relaxed accumulation {'enabled with ' + str(_relaxed_workers) + ' workers' if _relaxed_workers else 'disabled'}")

def relaxed_workers():
    return _relaxed_workers


class OpContext:
    """What a forward pass recorded for its backward pass"""

    def __init__(self, op, **saved):
        self.op = op
        self.saved = saved

    def __getitem__(self, key):
        return self.saved[key]


def _require_context(op, ctx):
    if ctx is None or not isinstance(ctx, OpContext) or ctx.op is not op:
        raise ContextError(f"{type(op).__name__}.backward called without its recorded forward context")


def _as_batch(tensors):
    if isinstance(tensors, SparseTensor2D):
        return [tensors], True
    return list(tensors), False


# ---------------------------------------------------------------------- kernels

def rulebook_conv_features(features, rulebook, params):
    """
    Gather -> multiply -> scatter over a rulebook

    Args:
        features (np.ndarray): (n_in, Cin) input features
        rulebook (Rulebook): Pairs grouped by offset
        params (ConvParams): Weights with kh * kw == number of offsets

    Returns:
        np.ndarray: (n_out, Cout) output features, bias included
    """
    weight = params.flat_weight()
    dtype = np.result_type(features.dtype, weight.dtype)
    out = np.empty((rulebook.num_out, params.out_channels), dtype=dtype)
    out[...] = params.bias

    work = [(k, src, dst) for k, (src, dst) in enumerate(rulebook.pairs) if len(src)]
    if _relaxed_workers and len(work) > 1:
        with ThreadPoolExecutor(max_workers=_relaxed_workers) as pool:
            products = pool.map(lambda item: (item[2], features[item[1]] @ weight[item[0]]), work)
            for dst, product in products:
                out[dst] += product
        return out

    for k, src, dst in work:
        out[dst] += features[src] @ weight[k]
    return out

def rulebook_conv_backward(features, grad_out, rulebook, params):
    """
    Backward of ``rulebook_conv_features``

    Returns:
        tuple: (grad_in (n_in, Cin), grad_weight (kh, kw, Cin, Cout), grad_bias (Cout))
    """
    weight = params.flat_weight()
    dtype = np.result_type(features.dtype, weight.dtype)
    grad_in = np.zeros((len(features), params.in_channels), dtype=dtype)
    grad_weight = np.zeros(weight.shape, dtype=dtype)
    for k, (src, dst) in enumerate(rulebook.pairs):
        if not len(src):
            continue
        upstream = grad_out[dst]
        grad_weight[k] = features[src].T @ upstream
        grad_in[src] += upstream @ weight[k].T
    grad_bias = grad_out.sum(axis=0)
    return grad_in, grad_weight.reshape(params.weight.shape), grad_bias


def _check_conv(x, rulebook, params, kind):
    if x.channels != params.in_channels:
        raise ShapeError(f"Input has {x.channels} channels, layer expects {params.in_channels}")
    if rulebook.kind != kind:
        raise ShapeError(f"Expected a {kind} rulebook, got {rulebook.kind}")
    if (rulebook.kernel_height, rulebook.kernel_width) != (params.kernel_height, params.kernel_width):
        raise ShapeError(
            f"Rulebook kernel {rulebook.kernel_height}x{rulebook.kernel_width} does not match "
            f"weights {params.kernel_height}x{params.kernel_width}"
        )
    if not rulebook.matches_input(x):
        raise ShapeError("Rulebook was not built from this tensor's site set")


# ---------------------------------------------------------------------- layers

class SubmanifoldConv:
    """Stride-1 convolution whose output sites are exactly the input sites"""

    def __init__(self, params):
        self.params = params

    def forward(self, inputs, rulebooks):
        inputs, _ = _as_batch(inputs)
        rulebooks = [rulebooks] if isinstance(rulebooks, Rulebook) else list(rulebooks)
        outputs = []
        for x, rulebook in zip(inputs, rulebooks, strict=True):
            _check_conv(x, rulebook, self.params, Rulebook.SUBMANIFOLD)
            outputs.append(x.with_values(rulebook_conv_features(x.values, rulebook, self.params)))
        return outputs, OpContext(self, inputs=inputs, rulebooks=rulebooks)

    def backward(self, ctx, grads):
        _require_context(self, ctx)
        grads, _ = _as_batch(grads)
        grad_inputs = []
        for x, rulebook, grad in zip(ctx['inputs'], ctx['rulebooks'], grads, strict=True):
            grad_in, grad_weight, grad_bias = rulebook_conv_backward(x.values, grad.values, rulebook, self.params)
            self.params.grad_weight += grad_weight
            self.params.grad_bias += grad_bias
            grad_inputs.append(x.with_values(grad_in))
        return grad_inputs


class StridedConv:
    """Downsampling convolution onto the OR-pooled coarse active set"""

    def __init__(self, params):
        self.params = params

    def forward(self, inputs, rulebooks):
        inputs, _ = _as_batch(inputs)
        rulebooks = [rulebooks] if isinstance(rulebooks, Rulebook) else list(rulebooks)
        outputs = []
        for x, rulebook in zip(inputs, rulebooks, strict=True):
            _check_conv(x, rulebook, self.params, Rulebook.STRIDED)
            values = rulebook_conv_features(x.values, rulebook, self.params)
            height, width = rulebook.out_shape
            outputs.append(SparseTensor2D(height, width, self.params.out_channels,
                                          rulebook.out_coords, values, _trusted=True))
        return outputs, OpContext(self, inputs=inputs, rulebooks=rulebooks)

    def backward(self, ctx, grads):
        _require_context(self, ctx)
        grads, _ = _as_batch(grads)
        grad_inputs = []
        for x, rulebook, grad in zip(ctx['inputs'], ctx['rulebooks'], grads, strict=True):
            grad_in, grad_weight, grad_bias = rulebook_conv_backward(x.values, grad.values, rulebook, self.params)
            self.params.grad_weight += grad_weight
            self.params.grad_bias += grad_bias
            grad_inputs.append(x.with_values(grad_in))
        return grad_inputs


class TransposedConv:
    """Upsampling convolution restoring a recorded finer active set

    The strided rulebook that produced the coarse level is reused with its pairs
    swapped; the fine site s receives W[d] applied to x[q] for every coarse site q
    with ``stride * q + d = s``.
    """

    def __init__(self, params):
        self.params = params

    def forward(self, inputs, rulebooks, targets):
        inputs, _ = _as_batch(inputs)
        rulebooks = [rulebooks] if isinstance(rulebooks, Rulebook) else list(rulebooks)
        targets = [targets] if isinstance(targets, (SparseTensor2D, np.ndarray)) else list(targets)
        outputs, transposed = [], []
        for x, rulebook, target in zip(inputs, rulebooks, targets, strict=True):
            if rulebook.kind != Rulebook.STRIDED:
                raise ShapeError(f"Transposed convolution needs the strided rulebook, got {rulebook.kind}")
            target_coords = target.coords if isinstance(target, SparseTensor2D) else np.asarray(target).reshape(-1, 2)
            if not np.array_equal(target_coords, rulebook.in_coords):
                raise ShapeError("Target sites are inconsistent with the rulebook geometry")
            if isinstance(target, SparseTensor2D) and (target.height, target.width) != rulebook.in_shape:
                raise ShapeError("Target shape is inconsistent with the rulebook geometry")
            reverse = rulebook.transpose()
            if x.channels != self.params.in_channels:
                raise ShapeError(f"Input has {x.channels} channels, layer expects {self.params.in_channels}")
            if not reverse.matches_input(x):
                raise ShapeError("Coarse input does not carry the rulebook's output site set")
            values = rulebook_conv_features(x.values, reverse, self.params)
            height, width = reverse.out_shape
            outputs.append(SparseTensor2D(height, width, self.params.out_channels,
                                          reverse.out_coords, values, _trusted=True))
            transposed.append(reverse)
        return outputs, OpContext(self, inputs=inputs, rulebooks=transposed)

    def backward(self, ctx, grads):
        _require_context(self, ctx)
        grads, _ = _as_batch(grads)
        grad_inputs = []
        for x, reverse, grad in zip(ctx['inputs'], ctx['rulebooks'], grads, strict=True):
            grad_in, grad_weight, grad_bias = rulebook_conv_backward(x.values, grad.values, reverse, self.params)
            self.params.grad_weight += grad_weight
            self.params.grad_bias += grad_bias
            grad_inputs.append(x.with_values(grad_in))
        return grad_inputs


class BatchNorm:
    """Per-channel normalization with statistics over the active sites of the whole batch"""

    def __init__(self, params):
        self.params = params

    def forward(self, inputs, training=False, update_stats=True):
        """
        Normalize a batch

        Training mode uses the batch statistics and, with ``update_stats``, folds
        them into the running ones. Inference uses the running statistics.
        """
        inputs, _ = _as_batch(inputs)
        p = self.params
        for x in inputs:
            if x.channels != p.channels:
                raise ShapeError(f"Input has {x.channels} channels, norm expects {p.channels}")

        splits = np.cumsum([x.num_sites for x in inputs])[:-1]
        stacked = np.concatenate([x.values for x in inputs], axis=0) if inputs else np.zeros((0, p.channels))
        dtype = np.result_type(stacked.dtype, p.dtype)
        stacked = stacked.astype(dtype, copy=False)
        count = len(stacked)

        if training and count:
            mean = stacked.mean(axis=0)
            var = stacked.var(axis=0)
            if update_stats:
                unbiased = var * count / (count - 1) if count > 1 else var
                p.running_mean[...] = (1 - p.momentum) * p.running_mean + p.momentum * mean
                p.running_var[...] = (1 - p.momentum) * p.running_var + p.momentum * unbiased
        else:
            mean = p.running_mean.astype(dtype)
            var = p.running_var.astype(dtype)

        inv_std = 1.0 / np.sqrt(var + p.epsilon)
        normalized = (stacked - mean) * inv_std
        result = normalized * p.gamma + p.beta
        outputs = [x.with_values(v) for x, v in zip(inputs, np.split(result, splits))]
        ctx = OpContext(self, inputs=inputs, normalized=normalized, inv_std=inv_std, mean=mean, var=var,
                        splits=splits, batch_stats=bool(training and count))
        return outputs, ctx

    def backward(self, ctx, grads):
        _require_context(self, ctx)
        grads, _ = _as_batch(grads)
        p = self.params
        upstream = np.concatenate([g.values for g in grads], axis=0) if grads else np.zeros((0, p.channels))
        normalized, inv_std = ctx['normalized'], ctx['inv_std']

        p.grad_beta += upstream.sum(axis=0).astype(p.dtype)
        p.grad_gamma += (upstream * normalized).sum(axis=0).astype(p.dtype)

        scaled = upstream * p.gamma
        if ctx['batch_stats']:
            count = len(upstream)
            grad_in = (inv_std / count) * (count * scaled - scaled.sum(axis=0)
                                           - normalized * (scaled * normalized).sum(axis=0))
        else:
            grad_in = scaled * inv_std
        return [x.with_values(g) for x, g in zip(ctx['inputs'], np.split(grad_in, ctx['splits']))]


class ReLU:
    """Rectification at active sites; the site set is unchanged"""

    def forward(self, inputs):
        inputs, _ = _as_batch(inputs)
        outputs = [x.with_values(np.maximum(x.values, 0)) for x in inputs]
        return outputs, OpContext(self, masks=[x.values > 0 for x in inputs], inputs=inputs)

    def backward(self, ctx, grads):
        _require_context(self, ctx)
        grads, _ = _as_batch(grads)
        return [x.with_values(g.values * mask)
                for x, g, mask in zip(ctx['inputs'], grads, ctx['masks'], strict=True)]


class Concat:
    """Channel concatenation of two tensors sharing one site set"""

    def forward(self, first, second):
        first, _ = _as_batch(first)
        second, _ = _as_batch(second)
        outputs = []
        for a, b in zip(first, second, strict=True):
            if not a.same_sites(b):
                raise ShapeError("Channel concatenation needs identical site sets and spatial shapes")
            outputs.append(a.with_values(np.concatenate([a.values, b.values.astype(a.values.dtype, copy=False)], axis=1)))
        return outputs, OpContext(self, split=[a.channels for a in first], inputs=first)

    def backward(self, ctx, grads):
        _require_context(self, ctx)
        grads, _ = _as_batch(grads)
        grad_first, grad_second = [], []
        for x, g, split in zip(ctx['inputs'], grads, ctx['split'], strict=True):
            grad_first.append(x.with_values(g.values[:, :split]))
            grad_second.append(x.with_values(g.values[:, split:]))
        return grad_first, grad_second


# ---------------------------------------------------------------------- functional API

def submanifold_conv_forward(x, rulebook, params):
    """Submanifold convolution of one tensor"""
    return SubmanifoldConv(params).forward([x], [rulebook])[0][0]

def strided_conv_forward(x, rulebook, params):
    """Strided convolution of one tensor onto the rulebook's coarse site set"""
    return StridedConv(params).forward([x], [rulebook])[0][0]

def transposed_conv_forward(x, rulebook, target_sites, params):
    """Transposed convolution of one coarse tensor back onto recorded fine sites"""
    return TransposedConv(params).forward([x], [rulebook], [target_sites])[0][0]

def norm_forward(x, params, training=False):
    """Normalize one tensor, or a batch given as a list"""
    batch, single = _as_batch(x)
    outputs, _ = BatchNorm(params).forward(batch, training=training)
    return outputs[0] if single else outputs

def relu_forward(x):
    return ReLU().forward([x])[0][0]

def concat_channels(a, b):
    return Concat().forward([a], [b])[0][0]
