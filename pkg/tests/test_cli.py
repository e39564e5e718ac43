import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from sparsepose import __version__
from sparsepose.cli import cli
from sparsepose.errors import ConfigError
from sparsepose.jobs.run_config import RunConfig
from sparsepose.storage import spf
from sparsepose.storage.annotations import read_annotations, write_split
from sparsepose.storage.reports import read_table
from sparsepose.storage.video import write_raw_video
from sparsepose.storage.weights import read_weights_header

from test_storage import resealed


def invoke(*args):
    return CliRunner().invoke(cli, [str(a) for a in args])


@pytest.fixture(scope='module')
def generated(tmp_path_factory):
    """A four-frame synthetic clip with a fixed two/two train/test split"""
    run_dir = tmp_path_factory.mktemp('generate')
    result = invoke('generate', '--action', 'jump_in_place', '--num-frames', 4, '--seed', 3,
                    '--camera-angle', '0', '--run-dir', run_dir)
    assert result.exit_code == 0, result.output
    write_split({0: 'train', 1: 'train', 2: 'test', 3: 'test'}, str(run_dir / 'split.csv'))
    return run_dir


@pytest.fixture(scope='module')
def trained(generated, tmp_path_factory):
    run_dir = tmp_path_factory.mktemp('train')
    result = invoke('train', '--input', generated / 'clip.spf', '--annotations', generated / 'annotations.csv',
                    '--split', generated / 'split.csv', '--backbone', 'dhp19_like', '--modality', 'edge',
                    '--steps', 2, '--batch-size', 1, '--learning-rate', 0.01, '--run-dir', run_dir)
    assert result.exit_code == 0, result.output
    return run_dir


class TestRunConfig:
    def test_unset_options_keep_defaults(self):
        config = RunConfig.from_options('train', backbone='dhp19_like', steps=None, unknown=5)
        assert config.backbone == 'dhp19_like'
        assert config.steps == RunConfig.steps
        assert config.input_channels == 3

    @pytest.mark.parametrize('options', [
        {'backbone': 'resnet'}, {'modality': 'depth'}, {'conv_mode': 'winograd'},
        {'modality': 'grayscale'}, {'action': 'moonwalk'}, {'num_frames': 0},
        {'motion_blur': 2.0}, {'test_fraction': 1.0}, {'edge_low': 120.0},
        {'mv_block': 0}, {'bench_backbones': ('unet_small', 'vgg')},
    ])
    def test_invalid(self, options):
        with pytest.raises(ConfigError):
            RunConfig(command='train', **options).validate()

    def test_grayscale_in_dense_mode(self):
        config = RunConfig(command='train', modality='grayscale', conv_mode='dense').validate()
        assert config.input_channels == 1

    def test_to_dict_is_json(self):
        data = RunConfig(command='eval', weights=('a.spw', 'b.spw')).to_dict()
        assert json.loads(json.dumps(data))['weights'] == ['a.spw', 'b.spw']


class TestGenerate:
    def test_artifacts(self, generated):
        clip = spf.read_spf(str(generated / 'clip.spf'))
        annotations, config = read_annotations(str(generated / 'annotations.csv'))
        assert clip.num_frames == 4 and (clip.height, clip.width) == (480, 640)
        assert [a.frame_id for a in annotations] == [0, 1, 2, 3]
        assert config['scene']['action_id'] == 13
        assert clip.config['sensor']['edge_high'] == 100
        with open(generated / 'manifest.json') as f:
            manifest = json.load(f)
        assert manifest['command'] == 'generate'
        assert {'clip.spf', 'annotations.csv', 'split.csv'} <= set(manifest['artifacts'])

    def test_gray_video_and_seeded_split(self, tmp_path):
        for name in ('a', 'b'):
            result = invoke('generate', '--num-frames', 2, '--seed', 8, '--save-gray', '--run-dir', tmp_path / name)
            assert result.exit_code == 0, result.output
        assert (tmp_path / 'a' / 'gray.raw').exists()
        splits = [read_table(str(tmp_path / name / 'split.csv'))[0] for name in ('a', 'b')]
        assert splits[0].equals(splits[1])
        first, second = (spf.read_spf(str(tmp_path / name / 'clip.spf')) for name in ('a', 'b'))
        assert first.frames == second.frames

    def test_unknown_action(self, tmp_path):
        assert invoke('generate', '--action', 'moonwalk', '--run-dir', tmp_path).exit_code == 2


class TestExtract:
    def test_raw_video(self, tmp_path):
        frames = []
        for shift in (0, 2, 4):
            image = np.full((160, 160), 40, dtype=np.uint8)
            image[60:100, 60 + shift:100 + shift] = 230
            frames.append(image)
        write_raw_video(frames, str(tmp_path / 'video.raw'), fps=10)
        result = invoke('extract', '--input', tmp_path / 'video.raw', '--run-dir', tmp_path / 'out')
        assert result.exit_code == 0, result.output
        clip = spf.read_spf(str(tmp_path / 'out' / 'clip.spf'))
        assert clip.num_frames == 3 and clip.fps == 10
        assert clip.frames[0].mv.num_sites == 0
        assert np.all(clip.frames[2].mv.values[:, 0] == 32)


class TestStats:
    def test_sparsity_table(self, generated, tmp_path):
        result = invoke('stats', '--input', generated / 'clip.spf', '--run-dir', tmp_path)
        assert result.exit_code == 0, result.output
        table, _ = read_table(str(tmp_path / 'sparsity.csv'))
        assert len(table) == 5
        assert str(table['frame'].iloc[-1]) == 'mean'
        assert table['fusion'].iloc[-1] > 0.9

    def test_corrupted_clip(self, generated, tmp_path):
        data = bytearray((generated / 'clip.spf').read_bytes())
        data[30] ^= 0xFF
        (tmp_path / 'bad.spf').write_bytes(bytes(data))
        assert invoke('stats', '--input', tmp_path / 'bad.spf', '--run-dir', tmp_path / 'out').exit_code == 5

    def test_not_an_spf_file(self, generated, tmp_path):
        body = (generated / 'clip.spf').read_bytes()[:-4]
        (tmp_path / 'bad.spf').write_bytes(resealed(b'XXXX' + body[4:]))
        assert invoke('stats', '--input', tmp_path / 'bad.spf', '--run-dir', tmp_path / 'out').exit_code == 3


class TestTrainInferEval:
    def test_train_outputs(self, trained):
        header = read_weights_header(str(trained / 'weights.spw'))
        assert header['graph']['backbone']['name'] == 'dhp19_like'
        assert header['config']['modality'] == 'edge'
        losses, config = read_table(str(trained / 'losses.csv'))
        assert len(losses) == 2 and np.all(np.isfinite(losses['loss']))
        assert 'reachable_floor' in config

    def test_grayscale_needs_dense_mode(self, generated, tmp_path):
        result = invoke('train', '--input', generated / 'clip.spf', '--annotations', generated / 'annotations.csv',
                        '--modality', 'grayscale', '--run-dir', tmp_path)
        assert result.exit_code == 2

    def test_infer(self, generated, trained, tmp_path):
        result = invoke('infer', '--input', generated / 'clip.spf', '--annotations', generated / 'annotations.csv',
                        '--weights', trained / 'weights.spw', '--backbone', 'dhp19_like', '--dump-heatmaps',
                        '--run-dir', tmp_path)
        assert result.exit_code == 0, result.output
        predictions, _ = read_annotations(str(tmp_path / 'predictions.csv'))
        assert [p.frame_id for p in predictions] == [0, 1, 2, 3]
        assert all(p.resolution == (480, 640) for p in predictions)
        with np.load(tmp_path / 'heatmaps.npz') as dump:
            assert dump['heatmaps'].shape[0] == 4 and dump['heatmaps'].shape[-1] == 13
            assert json.loads(str(dump['config']))['command'] == 'infer'

    def test_eval_on_test_split(self, generated, trained, tmp_path):
        result = invoke('eval', '--input', generated / 'clip.spf', '--annotations', generated / 'annotations.csv',
                        '--weights', trained / 'weights.spw', '--split', generated / 'split.csv',
                        '--backbone', 'dhp19_like', '--run-dir', tmp_path)
        assert result.exit_code == 0, result.output
        report, config = read_table(str(tmp_path / 'hpe_report.csv'))
        overall = report.iloc[0]
        assert (overall['class'], overall['speed']) == ('all', 'all')
        assert overall['input_modality'] == 'edge' and overall['backbone'] == 'dhp19_like'
        assert overall['mpjpe'] >= 0
        assert config['split_name'] == 'test'

    def test_eval_rejects_other_backbone(self, generated, trained, tmp_path):
        result = invoke('eval', '--input', generated / 'clip.spf', '--annotations', generated / 'annotations.csv',
                        '--weights', trained / 'weights.spw', '--split', generated / 'split.csv',
                        '--backbone', 'unet_small', '--run-dir', tmp_path)
        assert result.exit_code == 2


def test_version():
    result = invoke('--version')
    assert result.exit_code == 0
    assert __version__ in result.output


@pytest.mark.slow
def test_bench_writes_reports(tmp_path):
    result = invoke('bench', '--backbones', 'dhp19_like', '--bench-frames', 1, '--run-dir', tmp_path)
    assert result.exit_code == 0, result.output
    flops, _ = read_table(str(tmp_path / 'flops_report.csv'))
    timing, _ = read_table(str(tmp_path / 'timing_report.csv'))
    assert flops['backbone'].tolist() == ['dhp19_like']
    assert 0 < flops['reduction'].iloc[0] < 1
    assert timing['repetitions'].iloc[0] == 30
    assert os.path.exists(tmp_path / 'manifest.json')
