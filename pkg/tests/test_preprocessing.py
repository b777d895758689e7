import numpy as np
import numpy.testing as npt
import pytest

from core.errors import AlignmentError, DataError, DegenerateSkeletonError, SchemaError
from core.preprocessing import (
    REQUIRED_JOINTS,
    LabelTrack,
    NormStats,
    PoseSequence,
    SensorSequence,
    Session,
    SessionProcessor,
    fit_clip,
    majority_label,
    make_windows,
    neck_midhip_scale,
    neck_midhip_scales,
    normalize_skeleton,
    resample_linear,
    scale_value,
    standardize_apply,
    standardize_fit,
)
from tests.conftest import make_pose_array


def pose_with_distances(distances, rate=1.0):
    positions = np.zeros((len(distances), len(REQUIRED_JOINTS), 3))
    positions[:, 3, 1] = distances
    return PoseSequence(rate, REQUIRED_JOINTS, positions)


class TestResample:
    def test_doubling_rate_interpolates_midpoints(self):
        out = resample_linear(np.array([0.0, 1.0, 2.0]), 1.0, 2.0)
        npt.assert_allclose(out, [0.0, 0.5, 1.0, 1.5, 2.0])

    def test_same_rate_is_identity(self):
        series = np.random.default_rng(0).normal(size=(17, 3))
        npt.assert_array_equal(resample_linear(series, 50.0, 50.0), series)

    def test_constant_series_stays_constant(self):
        out = resample_linear(np.full((31, 3), 4.5), 30.0, 100.0)
        assert out.shape == (101, 3)
        npt.assert_allclose(out, 4.5)

    def test_source_timestamps_preserved(self):
        series = np.random.default_rng(1).normal(size=(21, 2))
        out = resample_linear(series, 10.0, 100.0)
        npt.assert_allclose(out[::10], series, atol=1e-12)

    def test_downsampling_length(self):
        assert resample_linear(np.zeros(301), 100.0, 30.0).shape == (91,)

    def test_needs_two_samples(self):
        with pytest.raises(DataError):
            resample_linear(np.zeros((1, 3)), 30.0, 100.0)


class TestSkeletonScale:
    def test_constant_distance(self):
        pose = pose_with_distances(np.full(10, 0.5))
        assert neck_midhip_scale(pose, 4) == pytest.approx(0.5)

    def test_median_ignores_outlier(self):
        pose = pose_with_distances([0.4, 0.5, 100.0])
        assert neck_midhip_scale(pose, 1) == pytest.approx(0.5)

    def test_left_edge_is_clamped(self):
        distances = np.random.default_rng(2).uniform(0.5, 1.5, size=400)
        pose = pose_with_distances(distances, rate=100.0)
        assert neck_midhip_scale(pose, 0) == pytest.approx(np.median(distances[:151]))

    def test_vectorized_matches_per_frame(self):
        distances = np.random.default_rng(3).uniform(0.5, 1.5, size=420)
        pose = pose_with_distances(distances, rate=100.0)
        scales = neck_midhip_scales(pose)
        for t in (0, 10, 149, 150, 200, 269, 270, 419):
            assert scales[t] == pytest.approx(neck_midhip_scale(pose, t))

    def test_degenerate_skeleton(self):
        with pytest.raises(DegenerateSkeletonError):
            neck_midhip_scale(pose_with_distances(np.zeros(5)), 2)


class TestNormalizeSkeleton:
    @pytest.mark.parametrize("v, scale, expected", [(0.5, 0.5, 1.0), (0.0, 0.5, -1.0), (0.25, 0.5, 0.0)])
    def test_scale_value(self, v, scale, expected):
        assert scale_value(v, scale) == pytest.approx(expected)

    def test_midhip_maps_to_minus_one(self):
        pose = PoseSequence(100.0, REQUIRED_JOINTS, make_pose_array(20))
        npt.assert_allclose(normalize_skeleton(pose).joint("midhip"), -1.0)

    def test_offset_by_scale_on_x(self):
        positions = make_pose_array(20, neck_distance=0.8)
        positions[:, 0] = positions[:, 4] + (0.8, 0.0, 0.0)
        normalized = normalize_skeleton(PoseSequence(100.0, REQUIRED_JOINTS, positions))
        npt.assert_allclose(normalized.joint("wrist"), np.tile([1.0, -1.0, -1.0], (20, 1)))

    def test_translation_and_scale_invariance(self):
        positions = make_pose_array(50, seed=4)
        base = normalize_skeleton(PoseSequence(100.0, REQUIRED_JOINTS, positions)).positions
        moved = normalize_skeleton(
            PoseSequence(100.0, REQUIRED_JOINTS, positions * 3.0 + np.array([5.0, -2.0, 1.0]))
        ).positions
        npt.assert_allclose(moved, base, atol=1e-9)

    def test_missing_joint(self):
        pose = PoseSequence(100.0, ("wrist", "elbow", "shoulder", "neck"), np.zeros((4, 4, 3)))
        with pytest.raises(SchemaError):
            normalize_skeleton(pose)


class TestStandardize:
    def test_plus_minus_one_is_identity(self):
        train = np.tile(np.array([-1.0, 1.0]), (4, 3, 5))
        stats = standardize_fit(train)
        npt.assert_allclose(stats.mean, 0.0)
        npt.assert_allclose(stats.std, 1.0)
        npt.assert_allclose(standardize_apply(train, stats), train)

    def test_fit_split_is_standardized(self):
        train = np.random.default_rng(5).normal(3.0, 2.0, size=(8, 3, 50))
        out = standardize_apply(train, standardize_fit(train))
        assert np.all(np.abs(out.mean(axis=(0, 2))) < 1e-6)
        npt.assert_allclose(out.std(axis=(0, 2)), 1.0, atol=1e-6)

    def test_constant_channel_at_mean_becomes_zero(self):
        stats = NormStats([2.0, 0.0, 0.0], [1.0, 1.0, 1.0])
        out = standardize_apply(np.full((3, 10), 2.0), stats)
        npt.assert_array_equal(out[0], 0.0)

    def test_zero_std_channel(self):
        train = np.random.default_rng(6).normal(size=(4, 3, 10))
        train[:, 1] = 7.0
        with pytest.raises(DataError, match=r"\[1\]"):
            standardize_fit(train)


class TestWindows:
    def streams(self, n, labels=None):
        pose = np.zeros((n, 3, 3))
        sensor = np.arange(n * 3, dtype=float).reshape(n, 3)
        return pose, sensor, np.zeros(n, dtype=int) if labels is None else labels

    def test_offsets(self):
        windows = make_windows(*self.streams(340))
        assert [w.start for w in windows] == [0, 20, 40]
        assert windows[1].sensor.shape == (3, 300)
        assert windows[1].pose.shape == (3, 3, 300)
        assert windows[1].sensor[0, 0] == 60.0

    @pytest.mark.parametrize("n, expected", [(300, 1), (319, 1), (320, 2), (1000, 36)])
    def test_window_count(self, n, expected):
        assert len(make_windows(*self.streams(n))) == expected

    def test_majority_label(self):
        assert majority_label([0] * 200 + [1] * 100) == 0
        assert majority_label([2] * 150 + [1] * 150) == 1

    def test_short_stream(self):
        with pytest.raises(DataError):
            make_windows(*self.streams(299))

    def test_misaligned_streams(self):
        pose, sensor, labels = self.streams(400)
        with pytest.raises(AlignmentError):
            make_windows(pose[:-1], sensor, labels)

    def test_fit_clip_pads_and_crops(self):
        clip = np.arange(5.0)
        npt.assert_array_equal(fit_clip(clip, 8), [0, 0, 1, 2, 3, 4, 4, 4])
        npt.assert_array_equal(fit_clip(np.arange(9.0), 5), [2, 3, 4, 5, 6])


class TestSessionProcessor:
    def session(self, seconds=4.0, pose_rate=30.0, sensor_rate=50.0):
        n_pose = int(seconds * pose_rate)
        sensor = np.random.default_rng(7).normal(size=(int(seconds * sensor_rate), 3))
        return Session(
            "s-0001",
            PoseSequence(pose_rate, REQUIRED_JOINTS, make_pose_array(n_pose, seed=8)),
            SensorSequence(sensor_rate, sensor),
            LabelTrack([(0.0, 2.5, 1)], default=0),
        )

    def test_continuous_session_windows(self):
        windows = SessionProcessor().process(self.session())
        assert len(windows) == 5
        assert all(w.pose.shape == (3, 3, 300) for w in windows)
        assert windows[0].label == 1
        assert windows[-1].session_id == "s-0001"

    @pytest.mark.parametrize("order", ["resample-first", "normalize-first"])
    def test_either_order_windows_the_session(self, order):
        windows = SessionProcessor(order=order).process(self.session())
        assert len(windows) == 5
        assert all(np.isfinite(w.pose).all() for w in windows)

    def test_segmented_clip_is_one_window(self):
        processor = SessionProcessor(window_s=6.0, rate_hz=50.0)
        [window] = processor.process(self.session(seconds=2.0), segmented=True)
        assert window.sensor.shape == (3, 300)
        assert window.label == 1

    def test_unknown_order(self):
        with pytest.raises(DataError):
            SessionProcessor(order="sideways")

    def test_pose_without_required_joints(self):
        session = self.session()
        session.pose = PoseSequence(30.0, ("a", "b", "c", "d", "e"), session.pose.positions)
        with pytest.raises(SchemaError):
            SessionProcessor().process(session)
