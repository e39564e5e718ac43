import logging

import numpy as np

from config.settings import Config
from sparsepose.errors import ConfigError, ContextError, ShapeError
from sparsepose.models.graph import BackboneSpec, LayerConfig, ModelGraph
from sparsepose.models.rulebook import build_strided_rulebook, build_submanifold_rulebook
from sparsepose.models.sparse_tensor import SparseTensor2D
from sparsepose.services import dense_ops
from sparsepose.services.sparse_ops import (
    BatchNorm, Concat, ReLU, StridedConv, SubmanifoldConv, TransposedConv,
)

logger = logging.getLogger(__name__)

SPARSE = 'sparse'
DENSE = 'dense'

# ---------------------------------------------------------------------- graph assembly

class _LayerList:
    """Small builder that tracks channel count and level while appending layers"""

    def __init__(self, input_channels):
        self.layers = []
        self.channels = input_channels
        self.level = 0

    def conv_block(self, name, out_channels, kernel=(3, 3)):
        self.layers.append(LayerConfig(name, LayerConfig.SUBMANIFOLD, self.channels, out_channels,
                                       kernel=kernel, level=self.level))
        self.layers.append(LayerConfig(f'{name}_norm', LayerConfig.NORM, out_channels, out_channels, level=self.level))
        self.layers.append(LayerConfig(f'{name}_relu', LayerConfig.RELU, out_channels, out_channels, level=self.level))
        self.channels = out_channels
        return f'{name}_relu'

    def down(self, name, out_channels, kernel=(2, 2), stride=2):
        self.level += 1
        self.layers.append(LayerConfig(name, LayerConfig.DOWN, self.channels, out_channels,
                                       kernel=kernel, stride=stride, level=self.level))
        self.channels = out_channels

    def up(self, name, out_channels, kernel=(2, 2), stride=2):
        self.level -= 1
        self.layers.append(LayerConfig(name, LayerConfig.UP, self.channels, out_channels,
                                       kernel=kernel, stride=stride, level=self.level))
        self.channels = out_channels

    def concat(self, name, skip_from, skip_channels):
        self.layers.append(LayerConfig(name, LayerConfig.CONCAT, self.channels, self.channels + skip_channels,
                                       level=self.level, skip_from=skip_from))
        self.channels += skip_channels

    def head(self, num_joints):
        self.layers.append(LayerConfig('head', LayerConfig.HEAD, self.channels, num_joints, kernel=(1, 1)))
        self.channels = num_joints


def _unet_layers(spec, input_channels, num_joints):
    builder = _LayerList(input_channels)
    widths = spec.widths
    skips = []
    for level in range(spec.down_levels):
        for i in range(spec.convs_per_level):
            source = builder.conv_block(f'enc{level}_conv{i + 1}', widths[level])
        skips.append((source, widths[level]))
        builder.down(f'down{level}', widths[level])
    for i in range(spec.convs_per_level):
        builder.conv_block(f'bottom_conv{i + 1}', widths[spec.down_levels])
    for level in reversed(range(spec.down_levels)):
        builder.up(f'up{level}', widths[level])
        skip, channels = skips[level]
        builder.concat(f'cat{level}', skip, channels)
        for i in range(spec.convs_per_level):
            builder.conv_block(f'dec{level}_conv{i + 1}', widths[level])
    builder.head(num_joints)
    return builder.layers

def _dhp19_like_layers(spec, input_channels, num_joints):
    # Plain encoder/decoder without skips: two pooled levels, 3x3 submanifold convs
    narrow, mid, wide = spec.widths
    builder = _LayerList(input_channels)
    builder.conv_block('c1', narrow)
    builder.conv_block('c2', mid)
    builder.down('down1', mid)
    builder.conv_block('c3', mid)
    builder.conv_block('c4', mid)
    builder.conv_block('c5', wide)
    builder.down('down2', wide)
    for i in range(spec.convs_per_level):
        builder.conv_block(f'c{6 + i}', wide)
    builder.up('up2', mid)
    builder.conv_block('c9', mid)
    builder.conv_block('c10', mid)
    builder.up('up1', narrow)
    builder.conv_block('c11', narrow)
    builder.conv_block('c12', narrow)
    builder.head(num_joints)
    return builder.layers

def build_backbone(spec, input_channels, num_joints=Config.NUM_JOINTS, dtype=np.float32):
    """
    Assemble the layer graph of a backbone

    Args:
        spec (BackboneSpec | str): Backbone spec or name
        input_channels (int): 1 (edge or grayscale), 2 (MV) or 3 (fusion)
        num_joints (int): Output heatmap channels
        dtype: Parameter floating point type

    Returns:
        ModelGraph: Graph with zero-filled parameters (see ``init_weights``)
    """
    if isinstance(spec, str):
        spec = BackboneSpec.named(spec)
    if input_channels not in (1, 2, 3):
        raise ConfigError(f"Input channels must be 1, 2 or 3, got {input_channels}")

    if spec.name in (BackboneSpec.UNET_SMALL, BackboneSpec.UNET_LARGE):
        if spec.down_levels != 3 or len(spec.widths) != 4:
            raise ConfigError("U-Net backbones need three down/up levels and four widths")
        layers = _unet_layers(spec, input_channels, num_joints)
    elif spec.name == BackboneSpec.DHP19_LIKE:
        layers = _dhp19_like_layers(spec, input_channels, num_joints)
    else:
        raise ConfigError(f"Unknown backbone '{spec.name}'")

    graph = ModelGraph(spec=spec, input_channels=input_channels, num_joints=num_joints,
                       layers=layers, dtype=dtype)
    logger.info(f"Built {spec.name}: {len(layers)} layers, {graph.parameter_count():,} parameters")
    return graph

def init_weights(graph, seed=Config.SEED):
    """
    Seed-deterministic initialization

    Conv weights are uniform in +-1/sqrt(fan_in) with fan_in = kh * kw * Cin, biases
    zero; norms reset to identity with fresh running statistics.
    """
    rng = np.random.default_rng(seed)
    for layer in graph.layers:
        p = graph.params.get(layer.name)
        if p is None:
            continue
        if layer.has_conv:
            fan_in = p.kernel_height * p.kernel_width * p.in_channels
            limit = 1.0 / np.sqrt(fan_in)
            p.weight[...] = rng.uniform(-limit, limit, size=p.weight.shape)
            p.bias[...] = 0
        else:
            p.gamma[...] = 1
            p.beta[...] = 0
            p.running_mean[...] = 0
            p.running_var[...] = 1
        p.zero_grad()
    logger.debug(f"Initialized {graph.spec.name} weights with seed {seed}")

def assemble_fusion_input(edge, mv):
    """
    Early fusion: edge (1 channel) and MV (2 channels) into one 3-channel tensor

    The active set is the union of both inputs; a channel missing at a union
    site is zero.
    """
    if (edge.height, edge.width) != (mv.height, mv.width):
        raise ShapeError(f"Edge {edge.height}x{edge.width} and MV {mv.height}x{mv.width} shapes differ")
    if edge.channels != 1 or mv.channels != 2:
        raise ShapeError(f"Fusion expects 1 edge and 2 MV channels, got {edge.channels} and {mv.channels}")

    keys = np.union1d(edge.keys, mv.keys)
    coords = np.stack(np.divmod(keys, edge.width), axis=1).astype(np.int64).reshape(-1, 2)
    dtype = np.result_type(edge.values.dtype, mv.values.dtype)
    values = np.zeros((len(keys), 3), dtype=dtype)
    values[np.searchsorted(keys, edge.keys), 0:1] = edge.values
    values[np.searchsorted(keys, mv.keys), 1:3] = mv.values
    return SparseTensor2D(edge.height, edge.width, 3, coords, values, _trusted=True)

# ---------------------------------------------------------------------- sparse execution

class Geometry:
    """Active sets and rulebooks of one input at every level

    Rulebooks are built on first use and reused by every layer sharing the
    level and kernel, and by the transposed layer that mirrors a strided one.
    """

    def __init__(self, tensor):
        self.sites = {0: tensor.with_values(np.zeros((tensor.num_sites, 0), dtype=np.float32))}
        self._submanifold = {}
        self._strided = {}
        self.build_count = 0

    def submanifold(self, level, kernel):
        key = (level, tuple(kernel))
        if key not in self._submanifold:
            self._submanifold[key] = build_submanifold_rulebook(self.sites[level], *kernel)
            self.build_count += 1
        return self._submanifold[key]

    def strided(self, level, kernel, stride):
        """Rulebook from ``level`` to ``level + 1``; records the coarse site set"""
        key = (level, tuple(kernel), stride)
        if key not in self._strided:
            rulebook, coords = build_strided_rulebook(self.sites[level], kernel[0], kernel[1], stride)
            self._strided[key] = rulebook
            height, width = rulebook.out_shape
            self.sites[level + 1] = SparseTensor2D(height, width, 0, coords,
                                                   np.zeros((len(coords), 0), dtype=np.float32), _trusted=True)
            self.build_count += 1
        return self._strided[key]

    def rulebooks(self):
        return list(self._submanifold.values()) + list(self._strided.values())


class ForwardRecord:
    """Tape of one training forward pass"""

    def __init__(self, tape, outputs, geometries):
        self.tape = tape
        self.outputs = outputs
        self.geometries = geometries
        self.consumed = False


def _make_op(layer, params):
    if layer.kind in (LayerConfig.SUBMANIFOLD, LayerConfig.HEAD):
        return SubmanifoldConv(params)
    if layer.kind == LayerConfig.DOWN:
        return StridedConv(params)
    if layer.kind == LayerConfig.UP:
        return TransposedConv(params)
    if layer.kind == LayerConfig.NORM:
        return BatchNorm(params)
    if layer.kind == LayerConfig.RELU:
        return ReLU()
    return Concat()


class SparseExecutor:
    """Runs a ModelGraph with the submanifold sparse engine"""

    def __init__(self, graph):
        self.graph = graph
        self.ops = {layer.name: _make_op(layer, graph.params.get(layer.name)) for layer in graph.layers}

    def _check_inputs(self, inputs):
        for x in inputs:
            if x.channels != self.graph.input_channels:
                raise ShapeError(f"Input has {x.channels} channels, graph expects {self.graph.input_channels}")

    def run(self, inputs, training=False, record=False, geometries=None, update_stats=True):
        """
        Forward a mini-batch

        Args:
            inputs (list): SparseTensor2D inputs
            training (bool): Norm layers use batch statistics and update running ones
            record (bool): Keep the tape needed by ``backward``
            geometries (list, optional): Prebuilt per-input Geometry objects
            update_stats (bool): In training, fold batch statistics into the running ones

        Returns:
            tuple: (final sparse outputs, ForwardRecord or None)
        """
        inputs = list(inputs)
        self._check_inputs(inputs)
        geometries = geometries or [Geometry(x) for x in inputs]
        current = [x.astype(self.graph.dtype) for x in inputs]
        saved = {}
        tape = []
        for layer in self.graph.layers:
            op = self.ops[layer.name]
            if layer.kind in (LayerConfig.SUBMANIFOLD, LayerConfig.HEAD):
                rulebooks = [g.submanifold(layer.level, layer.kernel) for g in geometries]
                current, ctx = op.forward(current, rulebooks)
            elif layer.kind == LayerConfig.DOWN:
                rulebooks = [g.strided(layer.level - 1, layer.kernel, layer.stride) for g in geometries]
                current, ctx = op.forward(current, rulebooks)
            elif layer.kind == LayerConfig.UP:
                rulebooks = [g.strided(layer.level, layer.kernel, layer.stride) for g in geometries]
                targets = [g.sites[layer.level] for g in geometries]
                current, ctx = op.forward(current, rulebooks, targets)
            elif layer.kind == LayerConfig.NORM:
                current, ctx = op.forward(current, training=training, update_stats=update_stats)
            elif layer.kind == LayerConfig.RELU:
                current, ctx = op.forward(current)
            else:
                current, ctx = op.forward(current, saved[layer.skip_from])
            if layer.name in self.graph.skip_sources:
                saved[layer.name] = current
            if record:
                tape.append((layer, ctx))
        return current, (ForwardRecord(tape, current, geometries) if record else None)

    def backward(self, record, grad_heatmaps):
        """
        Backpropagate dense heatmap gradients through a recorded pass

        Only active output sites receive gradient; parameter gradients accumulate
        into the graph's parameter objects.

        Args:
            record (ForwardRecord): Tape from ``run(..., record=True)``
            grad_heatmaps (list): H x W x N gradient grids, one per input
        """
        if record is None or not isinstance(record, ForwardRecord) or record.consumed:
            raise ContextError("backward needs an unconsumed recorded forward pass")
        grads = [out.with_values(np.asarray(g)[out.coords[:, 0], out.coords[:, 1]].astype(out.values.dtype))
                 for out, g in zip(record.outputs, grad_heatmaps, strict=True)]
        pending = {}
        for layer, ctx in reversed(record.tape):
            if layer.name in pending:
                grads = [g.with_values(g.values + extra.values) for g, extra in zip(grads, pending.pop(layer.name))]
            op = self.ops[layer.name]
            if layer.kind == LayerConfig.CONCAT:
                grads, grad_skip = op.backward(ctx, grads)
                pending[layer.skip_from] = grad_skip
            else:
                grads = op.backward(ctx, grads)
        record.consumed = True
        return grads

# ---------------------------------------------------------------------- dense execution

class DenseExecutor:
    """Runs a ModelGraph as traditional convolution on full grids

    Each level's active mask (OR-pooled from the input occupancy) is re-applied
    after every layer, so outputs match the sparse engine. A fully active input
    makes every mask all-true and this is plain dense convolution.
    """

    def __init__(self, graph):
        self.graph = graph

    def run_one(self, x):
        if x.channels != self.graph.input_channels:
            raise ShapeError(f"Input has {x.channels} channels, graph expects {self.graph.input_channels}")
        masks = {0: x.site_mask()}
        grid = x.to_dense().astype(self.graph.dtype)
        saved = {}
        for layer in self.graph.layers:
            p = self.graph.params.get(layer.name)
            if layer.kind in (LayerConfig.SUBMANIFOLD, LayerConfig.HEAD):
                grid = dense_ops.dense_conv_forward(grid, p, stride=1)
            elif layer.kind == LayerConfig.DOWN:
                if layer.level not in masks:
                    masks[layer.level] = dense_ops.occupancy_pool(masks[layer.level - 1], *layer.kernel, layer.stride)
                grid = dense_ops.dense_conv_forward(grid, p, stride=layer.stride)
            elif layer.kind == LayerConfig.UP:
                grid = dense_ops.dense_transposed_conv_forward(grid, p, layer.stride, masks[layer.level].shape)
            elif layer.kind == LayerConfig.NORM:
                grid = dense_ops.dense_norm_forward(grid, p)
            elif layer.kind == LayerConfig.RELU:
                grid = dense_ops.dense_relu_forward(grid)
            else:
                grid = np.concatenate([grid, saved[layer.skip_from]], axis=2)
            grid = grid * masks[layer.level][:, :, None]
            if layer.name in self.graph.skip_sources:
                saved[layer.name] = grid
        return grid

    def run(self, inputs):
        return [self.run_one(x) for x in inputs]

# ---------------------------------------------------------------------- public API

def forward(graph, x, mode=SPARSE):
    """
    Inference forward pass to dense heatmaps

    Args:
        graph (ModelGraph): The model
        x (SparseTensor2D | list): One input or a list of inputs
        mode (str): 'sparse' or 'dense'

    Returns:
        np.ndarray | list: H x W x N heatmaps (inactive sites exactly 0), one per input
    """
    single = isinstance(x, SparseTensor2D)
    inputs = [x] if single else list(x)
    if mode == SPARSE:
        outputs, _ = SparseExecutor(graph).run(inputs, training=False)
        heatmaps = [out.to_dense() for out in outputs]
    elif mode == DENSE:
        heatmaps = DenseExecutor(graph).run(inputs)
    else:
        raise ConfigError(f"Unknown conv mode '{mode}'")
    return heatmaps[0] if single else heatmaps

def save_weights(graph, path, config=None):
    from sparsepose.storage.weights import write_weights
    write_weights(graph, path, config=config)

def load_weights(graph, path):
    from sparsepose.storage.weights import read_weights
    return read_weights(graph, path)
