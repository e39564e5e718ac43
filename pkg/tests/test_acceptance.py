"""Long-running end-to-end checks, deselected by default (run with ``-m slow``)"""
import pytest

from config.settings import Config
from sparsepose.models.pose import Action
from sparsepose.services import bench
from sparsepose.services import model as model_service
from sparsepose.services.dataset import EDGE, FUSION, build_samples, prepare_input
from sparsepose.services.evaluation import evaluate
from sparsepose.services.synthetic import SyntheticScene, generate_clip
from sparsepose.services.training import TrainConfig, train

pytestmark = pytest.mark.slow


@pytest.fixture(scope='module')
def fusion_inputs():
    clip = generate_clip(SyntheticScene.random('walk_in_place', seed=5, camera_angle=0), num_frames=4)
    return [prepare_input(frame, FUSION) for frame in clip.frames[1:]]


@pytest.mark.parametrize('name,ceiling', [('unet_small', 0.10), ('unet_large', 0.10), ('dhp19_like', 0.20)])
def test_flops_reduction(fusion_inputs, name, ceiling):
    graph = model_service.build_backbone(name, input_channels=3)
    for x in fusion_inputs:
        assert x.sparsity() >= 0.96
        report = bench.flops_report(graph, x)
        assert report.sparse_total / report.dense_total <= ceiling


@pytest.mark.parametrize('name,floor', [('unet_large', 3.0), ('unet_small', 1.5)])
def test_sparse_engine_is_faster(fusion_inputs, name, floor):
    graph = model_service.build_backbone(name, input_channels=3)
    model_service.init_weights(graph, seed=0)
    bench.check_agreement(graph, fusion_inputs[:1])
    dense = bench.benchmark_fps(graph, fusion_inputs[:1], model_service.DENSE)
    sparse = bench.benchmark_fps(graph, fusion_inputs[:1], model_service.SPARSE)
    assert sparse.fps / dense.fps >= floor


def test_speedup_shrinks_on_dense_input():
    graph = model_service.build_backbone('unet_small', input_channels=3)
    model_service.init_weights(graph, seed=0)
    full, sparse_input = bench.sparsity_sweep_inputs((0.0, 0.99), seed=1)
    speedups = []
    for x in (full, sparse_input):
        dense = bench.benchmark_fps(graph, [x], model_service.DENSE)
        sparse = bench.benchmark_fps(graph, [x], model_service.SPARSE)
        speedups.append(sparse.fps / dense.fps)
    assert speedups[0] <= speedups[1]


@pytest.fixture(scope='module')
def jump_clip():
    return generate_clip(SyntheticScene.random('jump_in_place', seed=2, camera_angle=0), num_frames=Config.CLIP_FRAMES)


def test_overfit_single_frame(jump_clip):
    samples = build_samples(jump_clip.frames[1:2], jump_clip.annotations[1:2], FUSION)
    graph = model_service.build_backbone('unet_small', input_channels=3)
    model_service.init_weights(graph, seed=0)
    result = train(graph, samples, TrainConfig(batch_size=1, steps=500))
    assert result.reduction(against_floor=True) >= 0.99
    assert result.reduction() >= 0.99 * result.max_reduction

    report = evaluate(graph, samples, modality=FUSION)
    assert report.iloc[0]['mpjpe'] < 2.0


def test_overfit_clip(jump_clip):
    samples = build_samples(jump_clip.frames, jump_clip.annotations, FUSION)
    assert len(samples) == 300
    graph = model_service.build_backbone('unet_small', input_channels=3)
    model_service.init_weights(graph, seed=0)
    train(graph, samples, TrainConfig(steps=1200))

    report = evaluate(graph, samples, modality=FUSION)
    assert report.iloc[0]['mpjpe'] < 2.0


def test_fusion_beats_edge_on_fast_motion():
    clip = generate_clip(SyntheticScene.random('jumping_jack', seed=4, camera_angle=0, motion_blur=0.5),
                         num_frames=120)
    train_ids, test_ids = list(range(1, 120, 2)), list(range(2, 120, 2))
    errors = {}
    for modality in (EDGE, FUSION):
        train_samples = build_samples(clip.frames, clip.annotations, modality, frame_ids=train_ids)
        test_samples = build_samples(clip.frames, clip.annotations, modality, frame_ids=test_ids)
        graph = model_service.build_backbone('dhp19_like', input_channels=Config.MODALITY_CHANNELS[modality])
        model_service.init_weights(graph, seed=0)
        train(graph, train_samples, TrainConfig(steps=600, seed=1))
        report = evaluate(graph, test_samples, modality=modality)
        fast_class = report[(report['class'] == Action.CLASS_FAST_WHOLE_BODY) & (report['speed'] == 'all')].iloc[0]
        fast_joints = report[(report['class'] == 'all') & (report['speed'] == 'fast')].iloc[0]
        assert fast_joints['n_joints'] > 0
        errors[modality] = fast_class['mpjpe']
    assert errors[FUSION] <= errors[EDGE]
