import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from sparsepose.models.graph import BackboneSpec, LayerConfig, ModelGraph
from sparsepose.models.sparse_tensor import SparseTensor2D
from sparsepose.services.model import init_weights
from sparsepose.services.synthetic import SyntheticScene, generate_clip


def random_sparse(rng, height, width, channels, density, dtype=np.float32, nonzero=True):
    """Random tensor with about ``density * H * W`` sites and values in +-[0.5, 1.5]"""
    count = max(1, int(round(density * height * width)))
    keys = np.sort(rng.choice(height * width, size=min(count, height * width), replace=False))
    coords = np.stack(np.divmod(keys, width), axis=1)
    values = rng.uniform(0.5, 1.5, size=(len(keys), channels))
    if nonzero:
        values *= rng.choice([-1.0, 1.0], size=values.shape)
    else:
        values = rng.normal(size=values.shape)
    return SparseTensor2D(height, width, channels, coords, values.astype(dtype))


def tiny_graph(input_channels=3, num_joints=13, dtype=np.float64, seed=0):
    """Two-level encoder/decoder small enough for finite differences"""
    L = LayerConfig
    layers = [
        L('c0', L.SUBMANIFOLD, input_channels, 4, (3, 3)),
        L('c0_norm', L.NORM, 4, 4),
        L('c0_relu', L.RELU, 4, 4),
        L('down1', L.DOWN, 4, 6, (2, 2), stride=2, level=1),
        L('c1', L.SUBMANIFOLD, 6, 6, (3, 3), level=1),
        L('c1_relu', L.RELU, 6, 6, level=1),
        L('up1', L.UP, 6, 4, (2, 2), stride=2, level=0),
        L('cat1', L.CONCAT, 4, 8, skip_from='c0_relu'),
        L('c2', L.SUBMANIFOLD, 8, 5, (3, 3)),
        L('head', L.HEAD, 5, num_joints, (1, 1)),
    ]
    spec = BackboneSpec('tiny', (4, 6), down_levels=1)
    graph = ModelGraph(spec=spec, input_channels=input_channels, num_joints=num_joints, layers=layers, dtype=dtype)
    init_weights(graph, seed=seed)
    return graph


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope='session')
def short_clip():
    """Six frames of a fast action at the native resolution"""
    scene = SyntheticScene.random('jump_in_place', seed=3, camera_angle=0)
    return generate_clip(scene, num_frames=6)
