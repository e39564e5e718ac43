import logging
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from config.settings import Config
from sparsepose import blas_threads
from sparsepose.errors import BenchmarkMismatchError, DivergenceError
from sparsepose.models.graph import LayerConfig
from sparsepose.models.sparse_tensor import SparseTensor2D
from sparsepose.services import model as model_service
from sparsepose.services.model import Geometry

logger = logging.getLogger(__name__)

# Published GFLOPs / FPS of traditional (C) and sparse (SC) convolution
REFERENCE = {
    'dhp19_like': {'dense_gflops': 275.45, 'sparse_gflops': 33.25, 'dense_fps': 26.89, 'sparse_fps': 38.88,
                   'flops_reduction': 0.87, 'speedup': 1.5},
    'unet_small': {'dense_gflops': 1135.0, 'sparse_gflops': 46.74, 'dense_fps': 11.82, 'sparse_fps': 36.13,
                   'flops_reduction': 0.96, 'speedup': 3.0},
    'unet_large': {'dense_gflops': 4510.0, 'sparse_gflops': 186.80, 'dense_fps': 1.07, 'sparse_fps': 13.89,
                   'flops_reduction': 0.96, 'speedup': 13.0},
}

NORM_FLOPS_PER_ELEMENT = 2
RELU_FLOPS_PER_ELEMENT = 1

@dataclass
class FlopsReport:
    """Per-layer dense and sparse FLOPs of one graph on one input"""
    backbone: str
    layers: list = field(default_factory=list)
    input_sparsity: dict = field(default_factory=dict)
    rulebook_seconds: float = 0.0

    @property
    def dense_total(self):
        return int(sum(row['dense_flops'] for row in self.layers))

    @property
    def sparse_total(self):
        return int(sum(row['sparse_flops'] for row in self.layers))

    @property
    def reduction(self):
        """1 - sparse / dense"""
        return 1.0 - self.sparse_total / self.dense_total if self.dense_total else 0.0

    def to_frame(self):
        return pd.DataFrame(self.layers, columns=['layer', 'kind', 'dense_flops', 'sparse_flops'])


@dataclass
class TimingReport:
    """Wall-clock frames per second of one engine"""
    backbone: str
    mode: str
    frames: int
    warmup: int
    repetitions: int
    median_seconds: float
    iqr_seconds: float
    rulebook_seconds: float = 0.0
    threads: int = None
    machine: str = ''

    @property
    def fps(self):
        return self.frames / self.median_seconds if self.median_seconds > 0 else float('inf')


def machine_descriptor():
    """Processor, platform and Python build of the benchmarking host"""
    return (f"{platform.processor() or platform.machine()} | {platform.platform()} | "
            f"python {platform.python_version()} | cpus {os.cpu_count()}")

def _elementwise(layer, elements):
    if layer.kind == LayerConfig.NORM:
        return NORM_FLOPS_PER_ELEMENT * elements
    if layer.kind == LayerConfig.RELU:
        return RELU_FLOPS_PER_ELEMENT * elements
    return 0

def count_dense_flops(graph, input_shape=(Config.INPUT_HEIGHT, Config.INPUT_WIDTH)):
    """
    Dense FLOPs per layer

    Convolutions cost 2 * kh * kw * Cin * Cout per output pixel (transposed ones
    per input pixel); norm and activation cost 2 and 1 FLOPs per element.

    Returns:
        list: dicts with layer, kind and dense_flops
    """
    shapes = {0: tuple(input_shape)}
    rows = []
    for layer in graph.layers:
        if layer.kind == LayerConfig.DOWN and layer.level not in shapes:
            height, width = shapes[layer.level - 1]
            shapes[layer.level] = (-(-height // layer.stride), -(-width // layer.stride))
        height, width = shapes[layer.level]
        kh, kw = layer.kernel
        if layer.kind == LayerConfig.UP:
            coarse_h, coarse_w = shapes[layer.level + 1]
            flops = 2 * kh * kw * layer.in_channels * layer.out_channels * coarse_h * coarse_w
        elif layer.has_conv:
            flops = 2 * kh * kw * layer.in_channels * layer.out_channels * height * width
        else:
            flops = _elementwise(layer, height * width * layer.out_channels)
        rows.append({'layer': layer.name, 'kind': layer.kind, 'dense_flops': int(flops)})
    return rows

def count_sparse_flops(graph, x, geometry=None):
    """
    Sparse FLOPs per layer for one input

    Convolutions cost 2 * pairs * Cin * Cout; elementwise layers are counted over
    active sites only. Rulebook construction is timed, not counted.

    Returns:
        tuple: (list of dicts with layer, kind and sparse_flops, rulebook seconds)
    """
    started = time.perf_counter()
    geometry = geometry or Geometry(x)
    rows = []
    for layer in graph.layers:
        if layer.kind in (LayerConfig.SUBMANIFOLD, LayerConfig.HEAD):
            pairs = geometry.submanifold(layer.level, layer.kernel).num_pairs
        elif layer.kind == LayerConfig.DOWN:
            pairs = geometry.strided(layer.level - 1, layer.kernel, layer.stride).num_pairs
        elif layer.kind == LayerConfig.UP:
            pairs = geometry.strided(layer.level, layer.kernel, layer.stride).num_pairs
        else:
            pairs = None
        if pairs is not None:
            flops = 2 * pairs * layer.in_channels * layer.out_channels
        else:
            flops = _elementwise(layer, geometry.sites[layer.level].num_sites * layer.out_channels)
        rows.append({'layer': layer.name, 'kind': layer.kind, 'sparse_flops': int(flops)})
    return rows, time.perf_counter() - started

def flops_report(graph, x):
    """Dense and sparse FLOPs of one input side by side"""
    dense = count_dense_flops(graph, (x.height, x.width))
    sparse, rulebook_seconds = count_sparse_flops(graph, x)
    layers = [{**d, 'sparse_flops': s['sparse_flops']} for d, s in zip(dense, sparse)]
    channel_sparsity = {f'channel_{c}': 1.0 - np.count_nonzero(x.values[:, c]) / float(x.height * x.width)
                        for c in range(x.channels)}
    channel_sparsity['sites'] = x.sparsity()
    return FlopsReport(backbone=graph.spec.name, layers=layers, input_sparsity=channel_sparsity,
                       rulebook_seconds=rulebook_seconds)

def check_agreement(graph, inputs, tolerance=Config.BENCH_AGREEMENT_TOLERANCE):
    """
    Verify that both engines produce finite, matching heatmaps

    Returns:
        float: Largest absolute difference
    """
    worst = 0.0
    for i, x in enumerate(inputs):
        sparse = model_service.forward(graph, x, mode=model_service.SPARSE)
        dense = model_service.forward(graph, x, mode=model_service.DENSE)
        if not (np.all(np.isfinite(sparse)) and np.all(np.isfinite(dense))):
            raise DivergenceError(f"Non-finite benchmark output on frame {i}")
        difference = float(np.max(np.abs(sparse.astype(np.float64) - dense))) if sparse.size else 0.0
        scale = max(1.0, float(np.max(np.abs(dense))) if dense.size else 1.0)
        if difference > tolerance * scale:
            raise BenchmarkMismatchError(
                f"Dense and sparse heatmaps differ by {difference:.3e} on frame {i} (tolerance {tolerance})"
            )
        worst = max(worst, difference)
    return worst

def benchmark_fps(graph, inputs, mode, warmup=Config.BENCH_WARMUP, repetitions=Config.BENCH_REPETITIONS):
    """
    Time full forward passes over a fixed frame set

    Each repetition runs every frame once; the sparse engine rebuilds its
    rulebooks inside the timed pass.

    Args:
        graph (ModelGraph): Model
        inputs (list): SparseTensor2D frames
        mode (str): sparse or dense
        warmup (int): Untimed passes, at least 5
        repetitions (int): Timed passes, at least 30

    Returns:
        TimingReport: Median and interquartile range of the pass time
    """
    warmup = max(warmup, Config.BENCH_WARMUP)
    repetitions = max(repetitions, Config.BENCH_REPETITIONS)

    def one_pass():
        outputs = model_service.forward(graph, list(inputs), mode=mode)
        if not all(np.all(np.isfinite(out)) for out in outputs):
            raise DivergenceError(f"Non-finite {mode} output during benchmarking")

    for _ in range(warmup):
        one_pass()
    durations = []
    for _ in range(repetitions):
        started = time.perf_counter()
        one_pass()
        durations.append(time.perf_counter() - started)

    rulebook_seconds = 0.0
    if mode == model_service.SPARSE:
        rulebook_seconds = sum(count_sparse_flops(graph, x)[1] for x in inputs)

    q1, median, q3 = np.percentile(durations, [25, 50, 75])
    report = TimingReport(backbone=graph.spec.name, mode=mode, frames=len(inputs), warmup=warmup,
                          repetitions=repetitions, median_seconds=float(median), iqr_seconds=float(q3 - q1),
                          rulebook_seconds=rulebook_seconds, threads=blas_threads(), machine=machine_descriptor())
    logger.info(f"{graph.spec.name} {mode}: {report.fps:.2f} FPS (median {median * 1e3:.1f} ms / pass, "
                f"IQR {report.iqr_seconds * 1e3:.1f} ms)")
    return report

def sparsity_sweep_inputs(sparsities=Config.BENCH_SPARSITY_SWEEP, shape=(Config.INPUT_HEIGHT, Config.INPUT_WIDTH),
                          channels=3, seed=Config.SEED):
    """
    Random inputs at prescribed site sparsities

    Sites are drawn without replacement; values are uniform in (0, 1].

    Returns:
        list: SparseTensor2D per requested sparsity
    """
    rng = np.random.default_rng(seed)
    height, width = shape
    inputs = []
    for sparsity in sparsities:
        count = int(round((1.0 - sparsity) * height * width))
        keys = np.sort(rng.choice(height * width, size=count, replace=False))
        coords = np.stack(np.divmod(keys, width), axis=1)
        values = (1.0 - rng.random((count, channels))).astype(np.float32)
        inputs.append(SparseTensor2D(height, width, channels, coords, values, _trusted=True))
    return inputs

def flops_table(reports):
    """One row per FlopsReport with the published reference values alongside"""
    rows = []
    for report in reports:
        reference = REFERENCE.get(report.backbone, {})
        rows.append({
            'backbone': report.backbone,
            'dense_gflops': report.dense_total / 1e9,
            'sparse_gflops': report.sparse_total / 1e9,
            'reduction': report.reduction,
            'input_sparsity': report.input_sparsity.get('sites'),
            'rulebook_seconds': report.rulebook_seconds,
            'reference_dense_gflops': reference.get('dense_gflops'),
            'reference_sparse_gflops': reference.get('sparse_gflops'),
            'reference_reduction': reference.get('flops_reduction'),
        })
    return pd.DataFrame(rows)

def timing_table(pairs):
    """One row per (dense, sparse) TimingReport pair with the published reference values"""
    rows = []
    for dense, sparse in pairs:
        reference = REFERENCE.get(dense.backbone, {})
        rows.append({
            'backbone': dense.backbone,
            'dense_fps': dense.fps,
            'sparse_fps': sparse.fps,
            'speedup': sparse.fps / dense.fps if dense.fps else float('nan'),
            'dense_iqr_seconds': dense.iqr_seconds,
            'sparse_iqr_seconds': sparse.iqr_seconds,
            'rulebook_seconds': sparse.rulebook_seconds,
            'warmup': dense.warmup,
            'repetitions': dense.repetitions,
            'threads': dense.threads,
            'machine': dense.machine,
            'reference_dense_fps': reference.get('dense_fps'),
            'reference_sparse_fps': reference.get('sparse_fps'),
            'reference_speedup': reference.get('speedup'),
        })
    return pd.DataFrame(rows)
