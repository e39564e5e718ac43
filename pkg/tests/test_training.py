import numpy as np
import pandas as pd
import pytest

from sparsepose.errors import ConfigError, DataError, DivergenceError
from sparsepose.models.frame import SparseFrame
from sparsepose.models.pose import Action, PoseAnnotation
from sparsepose.models.sparse_tensor import SparseTensor2D
from sparsepose.services import model as model_service
from sparsepose.services.dataset import Sample, build_samples, prepare_input
from sparsepose.services.evaluation import REPORT_COLUMNS, evaluate, summarize
from sparsepose.services.training import TrainConfig, TrainResult, recalibrate_norms, train

from conftest import random_sparse, tiny_graph


def corner_frame(index=0):
    edge = SparseTensor2D(480, 640, 1, [[0, 0], [479, 639]], [[255], [51]])
    mv = SparseTensor2D(480, 640, 2, [[479, 639]], [[-128, 64]])
    return SparseFrame(index, edge, mv)


def pose(frame_id=0, action_id=13, offset=0.0):
    joints = np.column_stack([np.linspace(60, 420, 13), np.linspace(80, 560, 13)]) + offset
    return PoseAnnotation(joints, frame_id=frame_id, action_id=action_id)


class TestPrepareInput:
    def test_edge_channel(self):
        x = prepare_input(corner_frame(), 'edge')
        assert x.shape == (288, 384, 1)
        assert x.coords.tolist() == [[0, 0], [287, 383]]
        assert x.values.dtype == np.float32
        assert np.allclose(x.values[:, 0], [1.0, 0.2])

    def test_mv_channels(self):
        x = prepare_input(corner_frame(), 'mv')
        assert x.coords.tolist() == [[287, 383]]
        assert np.allclose(x.values, [[-1.0, 0.5]])

    def test_fusion_is_union(self):
        x = prepare_input(corner_frame(), 'fusion')
        assert x.channels == 3
        assert np.allclose(x.to_dense()[0, 0], [1.0, 0.0, 0.0])
        assert np.allclose(x.to_dense()[287, 383], [0.2, -1.0, 0.5])

    def test_colliding_sites_keep_largest(self):
        edge = SparseTensor2D(480, 640, 1, [[0, 0], [1, 1]], [[10], [200]])
        frame = SparseFrame(0, edge, SparseTensor2D.empty(480, 640, 2))
        x = prepare_input(frame, 'edge')
        assert x.coords.tolist() == [[0, 0]]
        assert x.values[0, 0] == pytest.approx(200 / 255)

    def test_grayscale_is_fully_active(self):
        x = prepare_input(None, 'grayscale', gray=np.full((480, 640), 255, dtype=np.uint8))
        assert x.num_sites == 288 * 384
        assert np.all(x.values == 1.0)

    def test_grayscale_needs_video(self):
        with pytest.raises(ConfigError):
            prepare_input(corner_frame(), 'grayscale')

    def test_unknown_modality(self):
        with pytest.raises(ConfigError):
            prepare_input(corner_frame(), 'depth')


class TestBuildSamples:
    def test_split_and_context(self):
        frames = [SparseFrame.empty(i) for i in range(3)]
        annotations = [pose(i) for i in range(3)]
        samples = build_samples(frames, annotations, 'edge', shape=(24, 32), frame_ids=[1, 2])
        assert [s.annotation.frame_id for s in samples] == [1, 2]
        assert samples[0].previous.frame_id == 0
        assert samples[0].action_class == Action.CLASS_FAST_WHOLE_BODY
        assert samples[0].x.shape == (24, 32, 1)
        assert samples[0].target().shape == (24, 32, 13)

    def test_count_mismatch(self):
        with pytest.raises(DataError):
            build_samples([SparseFrame.empty(0)], [pose(0), pose(1)], 'edge')

    def test_missing_annotation(self):
        frames = [SparseFrame.empty(i) for i in range(3)]
        with pytest.raises(DataError):
            build_samples(frames, [pose(0), pose(1), pose(5)], 'edge')


class TestSummarize:
    def records(self):
        return pd.DataFrame([
            {'frame_id': 1, 'joint': 'nose', 'class': 'C1', 'speed': 'slow', 'error': 1.0, 'error_native': 2.0},
            {'frame_id': 1, 'joint': 'neck', 'class': 'C1', 'speed': 'medium', 'error': 3.0, 'error_native': 6.0},
            {'frame_id': 0, 'joint': 'nose', 'class': 'C2', 'speed': None, 'error': 5.0, 'error_native': 10.0},
            {'frame_id': 1, 'joint': 'nose', 'class': 'C2', 'speed': 'fast', 'error': 7.0, 'error_native': 14.0},
        ])

    def test_buckets(self):
        report = summarize(self.records(), 'unet_small', 'fusion', 'sparse')
        assert list(report.columns) == REPORT_COLUMNS
        assert report[['class', 'speed']].values.tolist() == [
            ['all', 'all'], ['C1', 'all'], ['C2', 'all'],
            ['all', 'slow'], ['all', 'medium'], ['all', 'fast'],
            ['C1', 'medium'], ['C1', 'slow'], ['C2', 'fast'],
        ]
        assert report['mpjpe'].tolist() == [4.0, 2.0, 6.0, 1.0, 3.0, 7.0, 3.0, 1.0, 7.0]
        assert report['n_joints'].tolist() == [4, 2, 2, 1, 1, 1, 1, 1, 1]
        assert report['mpjpe_native'].tolist() == [2 * v for v in report['mpjpe']]
        assert set(report['backbone']) == {'unet_small'}

    def test_class_buckets_recombine_to_overall(self):
        report = summarize(self.records(), 'unet_small', 'edge', 'dense')
        classes = report[(report['class'] != 'all') & (report['speed'] == 'all')]
        overall = report.iloc[0]
        weighted = (classes['mpjpe'] * classes['n_joints']).sum() / classes['n_joints'].sum()
        assert weighted == pytest.approx(overall['mpjpe'])

    def test_empty_speed_bucket(self):
        records = self.records()
        records = records[records['speed'] != 'fast']
        report = summarize(records, 'unet_small', 'edge', 'sparse')
        fast = report[(report['class'] == 'all') & (report['speed'] == 'fast')].iloc[0]
        assert fast['n_joints'] == 0 and np.isnan(fast['mpjpe'])


class TestEvaluate:
    def samples(self, clip):
        return build_samples(clip.frames, clip.annotations, 'fusion', shape=(24, 32))

    def test_report(self, short_clip):
        samples = self.samples(short_clip)
        report = evaluate(tiny_graph(), samples, modality='fusion')
        assert list(report.columns) == REPORT_COLUMNS
        overall = report.iloc[0]
        assert (overall['class'], overall['speed'], overall['backbone']) == ('all', 'all', 'tiny')
        assert overall['n_joints'] == sum(s.annotation.num_visible for s in samples)
        assert np.isfinite(overall['mpjpe']) and overall['mpjpe'] >= 0
        fast_class = report[(report['class'] == Action.CLASS_FAST_WHOLE_BODY) & (report['speed'] == 'all')]
        assert fast_class.iloc[0]['n_joints'] == overall['n_joints']
        speeds = report[(report['class'] == 'all') & (report['speed'] != 'all')]
        assert speeds['n_joints'].sum() <= overall['n_joints']

    def test_engines_give_the_same_report(self, short_clip):
        samples = self.samples(short_clip)[:3]
        graph = tiny_graph()
        sparse = evaluate(graph, samples, modality='fusion', conv_mode=model_service.SPARSE)
        dense = evaluate(graph, samples, modality='fusion', conv_mode=model_service.DENSE)
        assert np.allclose(sparse['mpjpe'], dense['mpjpe'], equal_nan=True)


class TestTrainConfig:
    @pytest.mark.parametrize('options', [
        {'learning_rate': -1.0}, {'momentum': 1.0}, {'batch_size': 0}, {'steps': -1}, {'lr_decay_factor': 0.0},
        {'warmup_steps': -1},
    ])
    def test_invalid(self, options):
        with pytest.raises(ConfigError):
            TrainConfig(**options).validate()

    def test_step_decay(self):
        config = TrainConfig(learning_rate=1.0, lr_schedule='step', warmup_steps=0, lr_decay_every=10,
                             lr_decay_factor=0.5)
        assert [config.learning_rate_at(s) for s in (0, 9, 10, 25)] == [1.0, 1.0, 0.5, 0.25]
        constant = TrainConfig(learning_rate=0.3, lr_schedule='constant', warmup_steps=0)
        assert constant.learning_rate_at(1000) == 0.3

    def test_warmup_then_cosine(self):
        config = TrainConfig(learning_rate=2.0, lr_schedule='cosine', warmup_steps=4, steps=14)
        assert [config.learning_rate_at(s) for s in range(4)] == pytest.approx([0.5, 1.0, 1.5, 2.0])
        assert config.learning_rate_at(4) == pytest.approx(2.0)
        assert config.learning_rate_at(9) == pytest.approx(1.0)
        assert config.learning_rate_at(14) == pytest.approx(0.0)
        rates = [config.learning_rate_at(s) for s in range(3, 14)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_unknown_schedule(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr_schedule='linear').validate()

    def test_result_max_reduction(self):
        result = TrainResult(losses=[4.0, 1.5], floor=1.0)
        assert result.max_reduction == pytest.approx(0.75)
        assert result.reduction() == pytest.approx(0.625)
        assert TrainResult().max_reduction == 0.0

    def test_result_reduction(self):
        result = TrainResult(losses=[4.0, 2.0, 1.0], floor=1.0)
        assert result.reduction() == pytest.approx(0.75)
        assert result.reduction(against_floor=True) == pytest.approx(1.0)
        assert TrainResult().reduction() == 0.0


class TestTrain:
    def samples(self, rng, count=2):
        return [Sample(x=random_sparse(rng, 16, 16, 3, 0.6), annotation=pose(i, offset=5.0 * i))
                for i in range(count)]

    def everything(self, graph):
        return {(name, key): array.copy() for name, p in graph.params.items() for key, array in p.arrays().items()}

    def test_zero_learning_rate_changes_nothing(self, rng):
        graph = tiny_graph()
        samples = self.samples(rng)
        before = self.everything(graph)
        heatmaps = model_service.forward(graph, [s.x for s in samples])
        config = TrainConfig(learning_rate=0.0, batch_size=2, steps=3)
        result = train(graph, samples, config)
        after = self.everything(graph)
        assert before.keys() == after.keys()
        assert ('c0_norm', 'running_mean') in before
        assert all(np.array_equal(before[key], after[key]) for key in before)
        for old, new in zip(heatmaps, model_service.forward(graph, [s.x for s in samples])):
            assert np.array_equal(old, new)
        assert result.losses == pytest.approx([result.losses[0]] * 3, rel=1e-9)
        assert result.learning_rates == [0.0, 0.0, 0.0]

    def test_training_moves_running_statistics(self, rng):
        graph = tiny_graph()
        config = TrainConfig(learning_rate=0.1, batch_size=2, steps=2, recalibrate_norms=False)
        train(graph, self.samples(rng), config)
        assert not np.array_equal(graph.params['c0_norm'].running_mean, np.zeros(4))

    def test_recalibration_matches_batch_statistics(self, rng):
        graph = tiny_graph()
        samples = self.samples(rng)
        config = TrainConfig(learning_rate=0.1, lr_schedule='constant', warmup_steps=0, batch_size=2, steps=3)
        train(graph, samples, config)
        executor = model_service.SparseExecutor(graph)
        batch_stats, _ = executor.run([s.x for s in samples], training=True, update_stats=False)
        running_stats, _ = executor.run([s.x for s in samples])
        for a, b in zip(batch_stats, running_stats):
            assert np.allclose(a.values, b.values, rtol=1e-6, atol=1e-9)

    def norm_statistics(self, graph, inputs):
        _, record = model_service.SparseExecutor(graph).run(inputs, training=True, record=True, update_stats=False)
        return {layer.name: (ctx['mean'], ctx['var']) for layer, ctx in record.tape if layer.name.endswith('_norm')}

    def test_recalibration_averages_batches(self, rng):
        graph = tiny_graph()
        samples = self.samples(rng, count=3)
        one = self.norm_statistics(graph, [s.x for s in samples[:2]])
        two = self.norm_statistics(graph, [samples[2].x])
        recalibrate_norms(graph, samples, batch_size=2)
        for name in one:
            norm = graph.params[name]
            assert np.allclose(norm.running_mean, (one[name][0] + two[name][0]) / 2)
            assert np.allclose(norm.running_var, (one[name][1] + two[name][1]) / 2)

    def test_small_step_lowers_the_loss(self, rng):
        graph = tiny_graph()
        calls = []
        config = TrainConfig(learning_rate=0.1, momentum=0.0, batch_size=2, steps=2,
                             lr_schedule='constant', warmup_steps=0)
        result = train(graph, self.samples(rng), config, on_step=lambda *args: calls.append(args))
        assert result.losses[1] < result.losses[0]
        assert [c[0] for c in calls] == [0, 1]
        assert 0 <= result.floor < result.initial_loss

    def test_seeded_runs_repeat(self, rng):
        samples = self.samples(rng, count=3)
        config = TrainConfig(learning_rate=0.5, batch_size=2, steps=3, seed=7)
        first = train(tiny_graph(), samples, config)
        second = train(tiny_graph(), samples, config)
        assert first.losses == second.losses

    def test_divergence(self, rng):
        config = TrainConfig(learning_rate=1e200, momentum=0.0, batch_size=2, steps=5, warmup_steps=0)
        with pytest.raises(DivergenceError):
            with np.errstate(all='ignore'):
                train(tiny_graph(), self.samples(rng), config)

    def test_needs_samples(self):
        with pytest.raises(ConfigError):
            train(tiny_graph(), [], TrainConfig(steps=1))
