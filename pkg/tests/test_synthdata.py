import math

import numpy as np
import numpy.testing as npt
import pytest

from core.errors import DataError
from core.preprocessing import neck_midhip_scales, normalize_skeleton
from core.synthdata import (
    DEFAULT_CLASSES,
    MotionClassSpec,
    analytic_accel,
    band_energy_classify,
    default_classes,
    dominant_frequency,
    generate_dataset,
    generate_sessions,
    generate_trajectory,
)


def motion(frequency=1.0, amplitude=(0.1, 0.0, 0.0), phase=0.0, noise_std=0.0):
    return MotionClassSpec(class_id=0, name="probe", amplitude=amplitude,
                           frequency=frequency, phase=phase, noise_std=noise_std)


class TestTrajectory:
    def test_still_class_is_constant(self):
        pose = generate_trajectory(motion(frequency=0.0, phase=0.3), 2.0, 50.0)
        npt.assert_array_equal(pose.positions, np.repeat(pose.positions[:1], pose.n_frames, axis=0))

    def test_skeleton_scale_is_one(self):
        pose = generate_trajectory(DEFAULT_CLASSES[2], 3.0, 100.0)
        npt.assert_allclose(neck_midhip_scales(pose), 1.0)
        npt.assert_allclose(normalize_skeleton(pose).joint("neck"), np.tile([-1.0, 1.0, -1.0], (300, 1)))

    def test_wrist_peak_to_peak(self):
        pose = generate_trajectory(motion(amplitude=(0.1, 0.04, 0.0)), 1.0, 100.0)
        npt.assert_allclose(np.ptp(pose.joint("wrist"), axis=0), [0.2, 0.08, 0.0], atol=1e-12)

    def test_elbow_follows_wrist(self):
        pose = generate_trajectory(DEFAULT_CLASSES[0], 3.0, 100.0)
        wrist_motion = pose.joint("wrist") - pose.joint("wrist").mean(axis=0)
        elbow_motion = pose.joint("elbow") - pose.joint("elbow").mean(axis=0)
        npt.assert_allclose(elbow_motion, 0.5 * wrist_motion, atol=1e-12)

    def test_undersampled(self):
        with pytest.raises(DataError):
            generate_trajectory(motion(frequency=30.0), 1.0, 50.0)


class TestAcceleration:
    def test_closed_form_peak(self):
        accel = analytic_accel(motion(), 1.0, 100.0)
        assert np.abs(accel.values).max() == pytest.approx(0.1 * (2 * math.pi) ** 2, rel=1e-9)
        assert 0.1 * (2 * math.pi) ** 2 == pytest.approx(3.9478, abs=1e-4)

    def test_still_class_has_no_acceleration(self):
        assert not analytic_accel(motion(frequency=0.0, phase=1.0), 1.0, 100.0).values.any()

    def test_doubling_frequency_quadruples_peak(self):
        slow = analytic_accel(motion(frequency=1.0, phase=math.pi / 2), 1.0, 100.0).values
        fast = analytic_accel(motion(frequency=2.0, phase=math.pi / 2), 1.0, 100.0).values
        assert np.abs(fast).max() == pytest.approx(4.0 * np.abs(slow).max())

    def test_matches_second_difference_of_wrist(self):
        spec = DEFAULT_CLASSES[1]
        rate = 1000.0
        wrist = generate_trajectory(spec, 1.0, rate).joint("wrist")
        numeric = (wrist[2:] - 2 * wrist[1:-1] + wrist[:-2]) * rate ** 2
        npt.assert_allclose(numeric, analytic_accel(spec, 1.0, rate).values[1:-1], atol=1e-3)

    def test_noise_needs_stream(self):
        with pytest.raises(DataError):
            analytic_accel(motion(noise_std=0.1), 1.0, 100.0)


class TestDataset:
    counts = {"train": 3, "val": 2, "test": 2}

    def test_balanced_splits(self):
        dataset = generate_dataset(default_classes(4, 0.05), {"train": 5, "val": 2, "test": 2}, seed=0)
        assert len(dataset["train"]) == 20
        assert np.bincount([w.label for w in dataset["train"]]).tolist() == [5, 5, 5, 5]
        assert dataset["val"][0].sensor.shape == (3, 300)
        assert dataset["val"][0].pose.shape == (3, 3, 300)

    def test_same_seed_is_bit_identical(self):
        first = generate_dataset(default_classes(2, 0.05), self.counts, seed=3)
        second = generate_dataset(default_classes(2, 0.05), self.counts, seed=3)
        for a, b in zip(first["test"], second["test"]):
            npt.assert_array_equal(a.sensor, b.sensor)
            npt.assert_array_equal(a.pose, b.pose)

    def test_different_seed_differs(self):
        first = generate_dataset(default_classes(2, 0.05), self.counts, seed=3)
        second = generate_dataset(default_classes(2, 0.05), self.counts, seed=4)
        assert not np.array_equal(first["train"][0].sensor, second["train"][0].sensor)

    def test_splits_draw_from_independent_streams(self):
        small = generate_sessions(default_classes(2, 0.05), {"train": 2, "val": 1, "test": 1}, seed=0)
        large = generate_sessions(default_classes(2, 0.05), {"train": 2, "val": 4, "test": 1}, seed=0)
        for a, b in zip(small["train"], large["train"]):
            npt.assert_array_equal(a.sensor.values, b.sensor.values)
        assert [s.session_id for s in small["val"]] == ["val-wave-0000", "val-stir-0000"]

    def test_zero_windows(self):
        with pytest.raises(DataError):
            generate_dataset(default_classes(2), {"train": 2, "val": 0, "test": 1}, seed=0)

    def test_single_class(self):
        with pytest.raises(DataError):
            generate_dataset(default_classes(4)[:1], self.counts, seed=0)

    def test_class_count_bounds(self):
        with pytest.raises(DataError):
            default_classes(5)


class TestOracle:
    def test_dominant_frequency_of_pure_tone(self):
        times = np.arange(300) / 100.0
        window = np.stack([np.sin(2 * np.pi * 1.5 * times), np.zeros(300), np.zeros(300)])
        assert dominant_frequency(window, 100.0) == pytest.approx(1.5, abs=0.1)

    def test_band_energy_separates_default_classes(self):
        specs = default_classes(4, noise_std=0.1)
        dataset = generate_dataset(specs, {"train": 1, "val": 1, "test": 10}, seed=11)
        windows = np.stack([w.sensor for w in dataset["test"]])
        labels = np.array([w.label for w in dataset["test"]])
        npt.assert_array_equal(band_energy_classify(windows, specs), labels)
