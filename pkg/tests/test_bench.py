import os

import numpy as np
import pandas as pd
import pytest

import sparsepose
from sparsepose.errors import BenchmarkMismatchError
from sparsepose.models.sparse_tensor import SparseTensor2D
from sparsepose.services import bench
from sparsepose.services import model as model_service

from conftest import random_sparse, tiny_graph


DENSE_8x8 = {
    'c0': 13824, 'c0_norm': 512, 'c0_relu': 256, 'down1': 3072, 'c1': 10368,
    'c1_relu': 96, 'up1': 3072, 'cat1': 0, 'c2': 46080, 'head': 8320,
}


def full_input(height=8, width=8, channels=3):
    return SparseTensor2D.full(np.ones((height, width, channels), dtype=np.float32))


class TestFlopCounting:
    def test_dense_counts(self):
        rows = bench.count_dense_flops(tiny_graph(), (8, 8))
        assert {row['layer']: row['dense_flops'] for row in rows} == DENSE_8x8

    def test_full_grid_sparse_counts(self):
        graph = tiny_graph()
        rows, seconds = bench.count_sparse_flops(graph, full_input())
        sparse = {row['layer']: row['sparse_flops'] for row in rows}
        assert seconds >= 0
        # 3x3 pairs on a full 8x8 grid: (8 + 7 + 7) ** 2
        assert sparse['c0'] == 2 * 484 * 3 * 4
        assert sparse['c1'] == 2 * 100 * 6 * 6
        for name in ('down1', 'up1', 'head', 'c0_norm', 'c0_relu', 'c1_relu', 'cat1'):
            assert sparse[name] == DENSE_8x8[name], name
        assert all(sparse[name] <= DENSE_8x8[name] for name in sparse)

    def test_report(self, rng):
        graph = tiny_graph()
        x = random_sparse(rng, 8, 8, 3, 0.25)
        report = bench.flops_report(graph, x)
        assert report.backbone == 'tiny'
        assert report.dense_total == sum(DENSE_8x8.values())
        assert 0 < report.sparse_total < report.dense_total
        assert 0 < report.reduction < 1
        assert set(report.input_sparsity) == {'channel_0', 'channel_1', 'channel_2', 'sites'}
        assert report.input_sparsity['sites'] == pytest.approx(x.sparsity())
        assert list(report.to_frame().columns) == ['layer', 'kind', 'dense_flops', 'sparse_flops']

    def test_empty_input_costs_nothing_sparse(self):
        report = bench.flops_report(tiny_graph(), SparseTensor2D.empty(8, 8, 3))
        assert report.sparse_total == 0
        assert report.reduction == 1.0


class TestAgreement:
    def test_engines_agree(self, rng):
        inputs = [random_sparse(rng, 12, 12, 3, 0.2) for _ in range(2)]
        assert bench.check_agreement(tiny_graph(), inputs) < 1e-9

    def test_mismatch_is_raised(self, rng):
        inputs = [random_sparse(rng, 12, 12, 3, 0.2)]
        with pytest.raises(BenchmarkMismatchError):
            bench.check_agreement(tiny_graph(), inputs, tolerance=-1.0)


class TestTiming:
    def test_minimum_warmup_and_repetitions(self, rng):
        graph = tiny_graph()
        inputs = [random_sparse(rng, 8, 8, 3, 0.3)]
        report = bench.benchmark_fps(graph, inputs, model_service.SPARSE, warmup=0, repetitions=1)
        assert (report.warmup, report.repetitions) == (5, 30)
        assert report.frames == 1 and report.fps > 0
        assert report.iqr_seconds >= 0 and report.rulebook_seconds > 0
        assert report.machine

    def test_dense_has_no_rulebooks(self, rng):
        inputs = [random_sparse(rng, 8, 8, 3, 0.3)]
        report = bench.benchmark_fps(tiny_graph(), inputs, model_service.DENSE)
        assert report.rulebook_seconds == 0.0

    def test_reports_blas_threads(self, rng):
        report = bench.benchmark_fps(tiny_graph(), [random_sparse(rng, 8, 8, 3, 0.3)], model_service.DENSE)
        assert report.threads == sparsepose.blas_threads()


class TestBlasThreads:
    def test_package_import_sets_the_limit(self):
        for variable in sparsepose.BLAS_THREAD_VARIABLES:
            assert os.environ.get(variable)

    def test_limit_applies_when_set_before_numpy(self, monkeypatch):
        monkeypatch.setattr(sparsepose, '_threads_pinned', True)
        monkeypatch.setattr(sparsepose, '_threads_inherited', False)
        monkeypatch.setenv('OMP_NUM_THREADS', '1')
        assert sparsepose.blas_threads() == 1

    def test_caller_limit_is_reported(self, monkeypatch):
        monkeypatch.setattr(sparsepose, '_threads_pinned', False)
        monkeypatch.setattr(sparsepose, '_threads_inherited', True)
        monkeypatch.setenv('OMP_NUM_THREADS', '4')
        assert sparsepose.blas_threads() == 4

    def test_unknown_when_numpy_came_first(self, monkeypatch):
        monkeypatch.setattr(sparsepose, '_threads_pinned', False)
        monkeypatch.setattr(sparsepose, '_threads_inherited', False)
        assert sparsepose.blas_threads() is None


class TestSweep:
    def test_prescribed_sparsities(self):
        inputs = bench.sparsity_sweep_inputs((0.0, 0.5, 0.9), shape=(20, 30), channels=3, seed=2)
        assert [x.num_sites for x in inputs] == [600, 300, 60]
        for x, target in zip(inputs, (0.0, 0.5, 0.9)):
            assert x.sparsity() == pytest.approx(target)
            assert x.values.dtype == np.float32
            assert np.all(x.values > 0) and np.all(x.values <= 1)

    def test_seeded(self):
        a = bench.sparsity_sweep_inputs((0.9,), shape=(10, 10), seed=5)[0]
        b = bench.sparsity_sweep_inputs((0.9,), shape=(10, 10), seed=5)[0]
        assert a == b


class TestTables:
    def test_flops_table_reference_columns(self):
        known = bench.FlopsReport('unet_small', layers=[{'dense_flops': 100, 'sparse_flops': 4}],
                                  input_sparsity={'sites': 0.95})
        unknown = bench.FlopsReport('tiny', layers=[{'dense_flops': 10, 'sparse_flops': 5}])
        table = bench.flops_table([known, unknown])
        first, second = table.iloc[0], table.iloc[1]
        assert first['reduction'] == pytest.approx(0.96)
        assert first['reference_reduction'] == 0.96
        assert first['input_sparsity'] == 0.95
        assert pd.isna(second['reference_dense_gflops'])
        assert second['reduction'] == pytest.approx(0.5)

    def test_timing_table_speedup(self):
        dense = bench.TimingReport('unet_large', 'dense', frames=2, warmup=5, repetitions=30,
                                   median_seconds=1.0, iqr_seconds=0.1)
        sparse = bench.TimingReport('unet_large', 'sparse', frames=2, warmup=5, repetitions=30,
                                    median_seconds=0.25, iqr_seconds=0.02, rulebook_seconds=0.01)
        row = bench.timing_table([(dense, sparse)]).iloc[0]
        assert (row['dense_fps'], row['sparse_fps']) == (2.0, 8.0)
        assert row['speedup'] == pytest.approx(4.0)
        assert row['rulebook_seconds'] == 0.01
        assert row['reference_speedup'] == 13.0
