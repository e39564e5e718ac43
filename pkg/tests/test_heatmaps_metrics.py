import numpy as np
import pytest

from sparsepose.errors import ShapeError
from sparsepose.models.pose import PoseAnnotation, SpeedClass
from sparsepose.models.sparse_tensor import SparseTensor2D
from sparsepose.services.heatmaps import (
    decode_joints, make_target_heatmaps, mse_loss, reachable_floor, target_pixels,
)
from sparsepose.services.metrics import classify_speed, joint_displacements, joint_errors, mpjpe


def random_annotation(rng, margin=20):
    rows = rng.uniform(margin, 480 - margin, size=13)
    cols = rng.uniform(margin, 640 - margin, size=13)
    return PoseAnnotation(np.column_stack([rows, cols]))


class TestTargetHeatmaps:
    def test_peak_and_support(self):
        ann = PoseAnnotation(np.tile([240.0, 320.0], (13, 1)))
        heatmaps = make_target_heatmaps(ann, shape=(288, 384), sigma=4.0, truncate=3.0)
        assert heatmaps.shape == (288, 384, 13)
        channel = heatmaps[:, :, 0]
        assert channel.max() == 1.0
        assert channel[144, 192] == 1.0
        rows, cols = np.nonzero(channel)
        assert rows.min() == 144 - 12 and rows.max() == 144 + 12
        assert cols.min() == 192 - 12 and cols.max() == 192 + 12

    def test_invisible_joint_has_empty_channel(self):
        visible = np.ones(13, dtype=bool)
        visible[5] = False
        ann = PoseAnnotation(np.tile([100.0, 100.0], (13, 1)), visible)
        heatmaps = make_target_heatmaps(ann)
        assert not heatmaps[:, :, 5].any()
        assert heatmaps[:, :, 4].max() == 1.0

    def test_border_joint_keeps_peak(self):
        ann = PoseAnnotation(np.tile([0.0, 639.0], (13, 1)))
        heatmaps = make_target_heatmaps(ann)
        assert heatmaps[0, 383, 0] == 1.0

    def test_out_of_frame_joint_is_clamped(self, caplog):
        ann = PoseAnnotation(np.tile([500.0, -10.0], (13, 1)), validate=False)
        pixels, clamped = target_pixels(ann, (288, 384))
        assert clamped.all()
        assert pixels[0].tolist() == [287, 0]
        assert 'clamped' in caplog.text

    def test_encode_decode_recovers_pixels(self, rng):
        for _ in range(100):
            ann = random_annotation(rng)
            decoded = decode_joints(make_target_heatmaps(ann))
            pixels, _ = target_pixels(ann)
            assert np.array_equal(decoded.joints, pixels)
            assert decoded.visible.all()
            assert mpjpe(decoded, ann, scale_to=(288, 384)) <= np.sqrt(0.5) + 1e-9


class TestDecode:
    def test_ties_go_to_first_row_then_column(self):
        heatmaps = np.zeros((4, 5, 13))
        heatmaps[2, 1, 0] = heatmaps[1, 3, 0] = heatmaps[1, 4, 0] = 0.7
        decoded = decode_joints(heatmaps)
        assert decoded.joints[0].tolist() == [1, 3]

    def test_non_positive_channel_is_invisible(self):
        heatmaps = np.full((4, 5, 13), -0.1)
        heatmaps[3, 3, 2] = 0.2
        decoded = decode_joints(heatmaps)
        assert decoded.visible.tolist() == [i == 2 for i in range(13)]

    def test_wrong_channel_count(self):
        with pytest.raises(ShapeError):
            decode_joints(np.zeros((4, 4, 12)))


class TestLoss:
    def test_value_and_gradient(self):
        pred = np.array([[[1.0, 2.0]]])
        target = np.array([[[0.0, 0.0]]])
        loss, grad = mse_loss(pred, target)
        assert loss == pytest.approx(2.5)
        assert grad.tolist() == [[[1.0, 2.0]]]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss(np.zeros((2, 2, 13)), np.zeros((2, 3, 13)))

    def test_reachable_floor(self):
        x = SparseTensor2D(2, 2, 1, [[0, 0]], [[1]])
        target = np.zeros((2, 2, 1))
        target[0, 0] = 5
        assert reachable_floor([(x, target)]) == 0.0
        target[1, 1] = 2
        assert reachable_floor([(x, target)]) == pytest.approx(4 / 4)
        assert reachable_floor([]) == 0.0


class TestMetrics:
    def test_uniform_offset_gives_exactly_five(self, rng):
        truth = PoseAnnotation(rng.integers(20, 400, size=(13, 2)).astype(float))
        pred = PoseAnnotation(truth.joints + [3, 4], validate=False)
        assert mpjpe(pred, truth) == 5.0

    def test_invisible_truth_joints_are_ignored(self):
        joints = np.tile([100.0, 100.0], (13, 1))
        visible = np.zeros(13, dtype=bool)
        visible[0] = True
        truth = PoseAnnotation(joints, visible)
        pred_joints = joints.copy()
        pred_joints[1:] += 50
        pred = PoseAnnotation(pred_joints)
        assert mpjpe(pred, truth) == 0.0
        assert np.isnan(joint_errors(pred, truth)[1:]).all()

    def test_no_visible_joints(self):
        truth = PoseAnnotation(np.zeros((13, 2)), np.zeros(13, dtype=bool))
        assert mpjpe(truth, truth) is None

    def test_measured_at_truth_resolution(self):
        truth = PoseAnnotation(np.tile([100.0, 100.0], (13, 1)))
        pred = truth.rescaled(288, 384)
        assert mpjpe(pred, truth) == pytest.approx(0.0)

    def test_speed_classes(self):
        prev = PoseAnnotation(np.tile([100.0, 100.0], (13, 1)))
        moved = prev.joints.copy()
        moved[0, 0] += 3.9
        moved[1, 0] += 5.0
        moved[2] += [3.9, 5.2]
        moved[3] += [3.0, 4.0]
        cur = PoseAnnotation(moved)
        classes = classify_speed(prev, cur)
        assert classes[:4] == [SpeedClass.SLOW, SpeedClass.MEDIUM, SpeedClass.FAST, SpeedClass.MEDIUM]
        assert classes[4] == SpeedClass.SLOW
        assert joint_displacements(prev, cur)[2] == pytest.approx(6.5)

    def test_first_frame_and_missing_joints_excluded(self):
        cur = PoseAnnotation(np.tile([100.0, 100.0], (13, 1)))
        assert classify_speed(None, cur) == [None] * 13
        visible = np.ones(13, dtype=bool)
        visible[4] = False
        prev = PoseAnnotation(cur.joints, visible)
        assert classify_speed(prev, cur)[4] is None
