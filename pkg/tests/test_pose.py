import numpy as np
import pytest

from sparsepose.errors import ConfigError, ShapeError, ValueRangeError
from sparsepose.models.frame import SparseFrame
from sparsepose.models.pose import ACTIONS, JOINT_NAMES, Action, PoseAnnotation, SpeedClass, get_action
from sparsepose.models.sparse_tensor import SparseTensor2D


class TestActions:
    def test_catalogue(self):
        assert len(ACTIONS) == 16
        assert [a.action_id for a in ACTIONS] == list(range(1, 17))
        classes = [a.action_class for a in ACTIONS]
        assert classes.count(Action.CLASS_UPPER_BODY) == 4
        assert classes.count(Action.CLASS_LOWER_BODY) == 3
        assert classes.count(Action.CLASS_SLOW_WHOLE_BODY) == 4
        assert classes.count(Action.CLASS_FAST_WHOLE_BODY) == 5

    @pytest.mark.parametrize('key', [13, '13', 'Jump in place', 'jump_in_place', 'JUMP-IN-PLACE'])
    def test_lookup(self, key):
        assert get_action(key).name == 'Jump in place'

    def test_slug_with_ampersand(self):
        action = get_action(11)
        assert action.slug == 'roll_wrists_ankles'
        assert get_action(action.slug) is action

    @pytest.mark.parametrize('key', [0, 17, 'moonwalk'])
    def test_unknown(self, key):
        with pytest.raises(ConfigError):
            get_action(key)


class TestSpeedClass:
    @pytest.mark.parametrize('displacement,expected', [
        (0.0, SpeedClass.SLOW), (3.9, SpeedClass.SLOW), (4.0, SpeedClass.MEDIUM),
        (5.0, SpeedClass.MEDIUM), (6.0, SpeedClass.MEDIUM), (6.1, SpeedClass.FAST),
    ])
    def test_thresholds(self, displacement, expected):
        assert SpeedClass.of(displacement) == expected


class TestPoseAnnotation:
    def joints(self):
        return np.column_stack([np.linspace(50, 400, 13), np.linspace(100, 500, 13)])

    def test_defaults(self):
        ann = PoseAnnotation(self.joints())
        assert ann.num_visible == 13
        assert ann.resolution == (480, 640)
        assert np.allclose(ann.joint('nose'), [50, 100])

    def test_rescale(self):
        ann = PoseAnnotation(self.joints()).rescaled(288, 384)
        assert ann.resolution == (288, 384)
        assert np.allclose(ann.joints[0], [50 * 0.6, 100 * 0.6])

    def test_visible_joint_outside_frame(self):
        joints = self.joints()
        joints[3] = [480, 10]
        with pytest.raises(ValueRangeError):
            PoseAnnotation(joints)
        visible = np.ones(13, dtype=bool)
        visible[3] = False
        assert PoseAnnotation(joints, visible).num_visible == 12

    def test_wrong_joint_count(self):
        with pytest.raises(ShapeError):
            PoseAnnotation(np.zeros((12, 2)))

    def test_dict_round_trip(self):
        ann = PoseAnnotation(self.joints(), frame_id=7, camera_id=2, action_id=13)
        data = ann.to_dict()
        assert len(data) == 3 + 3 * len(JOINT_NAMES)
        back = PoseAnnotation.from_dict(data)
        assert back == ann
        assert (back.frame_id, back.camera_id, back.action_id) == (7, 2, 13)


class TestSparseFrame:
    def tensors(self):
        edge = SparseTensor2D(4, 4, 1, [[0, 0], [2, 3]], [[255], [12]])
        mv = SparseTensor2D(4, 4, 2, [[2, 3]], [[-128, 128]])
        return edge, mv

    def test_dtypes_and_sparsity(self):
        frame = SparseFrame(0, *self.tensors())
        assert frame.edge.values.dtype == np.uint8
        assert frame.mv.values.dtype == np.int16
        stats = frame.sparsity()
        assert stats['edge'] == pytest.approx(14 / 16)
        assert stats['mv'] == pytest.approx(15 / 16)
        assert stats['fusion'] == pytest.approx(14 / 16)

    def test_channel_checks(self):
        edge, mv = self.tensors()
        with pytest.raises(ShapeError):
            SparseFrame(0, mv, mv)
        with pytest.raises(ShapeError):
            SparseFrame(0, edge, SparseTensor2D.empty(4, 5, 2))

    @pytest.mark.parametrize('edge_value,mv_value', [(256, 0), (-1, 0), (10, 129), (10, -129), (10, 1.5)])
    def test_value_ranges(self, edge_value, mv_value):
        edge = SparseTensor2D(4, 4, 1, [[1, 1]], [[edge_value]])
        mv = SparseTensor2D(4, 4, 2, [[1, 1]], [[mv_value, 0]])
        with pytest.raises(ValueRangeError):
            SparseFrame(0, edge, mv)

    def test_empty(self):
        frame = SparseFrame.empty(3)
        assert frame.resolution == (480, 640)
        assert frame.sparsity()['fusion'] == 1.0
        assert frame == SparseFrame.empty(3)
        assert frame != SparseFrame.empty(4)
