import logging

import pandas as pd

from sparsepose import blas_threads
from sparsepose.jobs.common import start_run
from sparsepose.services import bench
from sparsepose.services import model as model_service
from sparsepose.services.dataset import FUSION, prepare_input
from sparsepose.services.synthetic import generate_clip
from sparsepose.storage.reports import write_table
from sparsepose.storage.spf import read_spf

logger = logging.getLogger(__name__)

def _bench_inputs(config):
    """Fusion inputs from the given SPF, or from a short synthetic clip"""
    if config.input:
        frames = read_spf(config.input).frames
    else:
        frames = generate_clip(config.action, seed=config.seed, num_frames=config.bench_frames + 1).frames
    # the first emulated frame has no motion channels
    frames = frames[1:config.bench_frames + 1] or frames[:1]
    return [prepare_input(frame, FUSION) for frame in frames]

def run_bench(config):
    """
    FLOPs and FPS of the dense and sparse engines per backbone

    Writes flops_report.csv and timing_report.csv (and sparsity_sweep.csv with
    ``sweep``). Timings are only taken after both engines agree on every frame.
    """
    manifest = start_run(config)
    if blas_threads() is None:
        logger.warning("numpy was loaded before sparsepose without OMP_NUM_THREADS; BLAS may run multi-threaded")
    inputs = _bench_inputs(config)
    sweep_inputs = bench.sparsity_sweep_inputs(seed=config.seed) if config.sweep else []

    flops_reports, timing_pairs, sweep_rows = [], [], []
    for name in config.bench_backbones:
        graph = model_service.build_backbone(name, input_channels=3)
        model_service.init_weights(graph, seed=config.seed)

        flops_reports.extend(bench.flops_report(graph, x) for x in inputs)
        worst = bench.check_agreement(graph, inputs)
        logger.info(f"{name}: engines agree (max difference {worst:.2e})")

        pair = []
        for mode in (model_service.DENSE, model_service.SPARSE):
            report = bench.benchmark_fps(graph, inputs, mode, warmup=config.warmup, repetitions=config.repetitions)
            pair.append(report)
        timing_pairs.append(tuple(pair))

        for x in sweep_inputs:
            flops = bench.flops_report(graph, x)
            dense = bench.benchmark_fps(graph, [x], model_service.DENSE, config.warmup, config.repetitions)
            sparse = bench.benchmark_fps(graph, [x], model_service.SPARSE, config.warmup, config.repetitions)
            sweep_rows.append({'backbone': name, 'sparsity': x.sparsity(), 'reduction': flops.reduction,
                               'dense_fps': dense.fps, 'sparse_fps': sparse.fps,
                               'speedup': sparse.fps / dense.fps})

    flops_table = bench.flops_table(flops_reports).groupby('backbone', as_index=False, sort=False).mean()
    timing_table = bench.timing_table(timing_pairs)
    paths = {'flops': manifest.artifact('flops_report.csv'), 'timing': manifest.artifact('timing_report.csv')}
    write_table(flops_table, paths['flops'], config=manifest.config)
    write_table(timing_table, paths['timing'], config=manifest.config)
    if sweep_rows:
        paths['sweep'] = manifest.artifact('sparsity_sweep.csv')
        write_table(pd.DataFrame(sweep_rows), paths['sweep'], config=manifest.config)
    manifest.save()

    for _, row in flops_table.iterrows():
        logger.info(f"{row['backbone']}: {row['dense_gflops']:.2f} -> {row['sparse_gflops']:.2f} GFLOPs "
                    f"(reduction {row['reduction']:.1%}, reference {row['reference_reduction']:.0%})")
    return dict(paths, flops_table=flops_table, timing_table=timing_table)
