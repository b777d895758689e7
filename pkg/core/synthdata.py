"""
Synthetic Kinematics

Sinusoidal wrist motions with closed-form accelerations. Every sample is an
exact function of the pose trajectory, so a perfect pose-to-sensor
regressor exists and the whole pipeline can be verified without a real
dataset.
"""

import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.engine.rng import Rng
from core.errors import DataError
from core.preprocessing import (
    LabeledWindow,
    LabelTrack,
    PoseSequence,
    SensorSequence,
    Session,
    SessionProcessor,
)


logger = logging.getLogger(__name__)

SYNTH_JOINTS = ("wrist", "elbow", "shoulder", "neck", "midhip")
SPLITS = ("train", "val", "test")

# Rest pose; neck and mid-hip are one unit apart so the skeleton scale is exactly 1
MIDHIP = (0.0, 0.0, 0.0)
NECK = (0.0, 1.0, 0.0)
SHOULDER = (-0.2, 0.9, 0.0)
ELBOW = (-0.3, 0.6, 0.0)
WRIST = (-0.35, 0.35, 0.1)


class MotionClassSpec(BaseModel):
    """One synthetic activity: wrist(t) = offset + A * sin(2*pi*f*t + phase)."""

    model_config = ConfigDict(frozen=True)

    class_id: int = Field(ge=0)
    name: str
    amplitude: Tuple[float, float, float]
    frequency: float = Field(ge=0.0)
    phase: float = 0.0
    elbow_gain: float = 0.5
    shoulder_gain: float = 0.1
    noise_std: float = Field(default=0.0, ge=0.0)

    @field_validator("amplitude")
    @classmethod
    def _finite(cls, value):
        if not all(math.isfinite(a) for a in value):
            raise ValueError("amplitudes must be finite")
        return value


DEFAULT_CLASSES = (
    MotionClassSpec(class_id=0, name="wave", amplitude=(0.10, 0.02, 0.0), frequency=1.0),
    MotionClassSpec(class_id=1, name="stir", amplitude=(0.06, 0.0, 0.06), frequency=1.5),
    MotionClassSpec(class_id=2, name="shake", amplitude=(0.0, 0.03, 0.03), frequency=2.5),
    MotionClassSpec(class_id=3, name="lift", amplitude=(0.0, 0.15, 0.05), frequency=0.5),
)


def default_classes(n_classes: int = 4, noise_std: float = 0.0) -> List[MotionClassSpec]:
    if not 2 <= n_classes <= len(DEFAULT_CLASSES):
        raise DataError(f"synthetic profile supports 2..{len(DEFAULT_CLASSES)} classes, got {n_classes}")
    return [spec.model_copy(update={"noise_std": noise_std}) for spec in DEFAULT_CLASSES[:n_classes]]


def _check_rate(spec: MotionClassSpec, rate: float) -> None:
    if rate < 2.0 * spec.frequency:
        raise DataError(
            f"rate {rate} Hz undersamples class '{spec.name}' ({spec.frequency} Hz needs >= {2 * spec.frequency} Hz)"
        )


def _times(duration_s: float, rate: float) -> np.ndarray:
    n = int(round(duration_s * rate))
    if n < 2:
        raise DataError(f"duration {duration_s} s at {rate} Hz gives fewer than 2 samples")
    return np.arange(n) / rate


def _oscillation(spec: MotionClassSpec, times: np.ndarray) -> np.ndarray:
    angle = 2.0 * np.pi * spec.frequency * times + spec.phase
    return np.sin(angle)[:, None] * np.asarray(spec.amplitude)[None, :]


def generate_trajectory(spec: MotionClassSpec, duration_s: float, rate: float) -> PoseSequence:
    """Five-joint pose stream; elbow and shoulder follow scaled copies of the wrist motion."""
    _check_rate(spec, rate)
    times = _times(duration_s, rate)
    wave = _oscillation(spec, times)
    n = len(times)
    positions = np.empty((n, len(SYNTH_JOINTS), 3))
    positions[:, 0] = np.asarray(WRIST) + wave
    positions[:, 1] = np.asarray(ELBOW) + spec.elbow_gain * wave
    positions[:, 2] = np.asarray(SHOULDER) + spec.shoulder_gain * wave
    positions[:, 3] = NECK
    positions[:, 4] = MIDHIP
    return PoseSequence(rate, SYNTH_JOINTS, positions)


def analytic_accel(
    spec: MotionClassSpec,
    duration_s: float,
    rate: float,
    rng: Optional[Rng] = None,
) -> SensorSequence:
    """Second derivative of the wrist trajectory plus Gaussian noise."""
    _check_rate(spec, rate)
    times = _times(duration_s, rate)
    values = -((2.0 * np.pi * spec.frequency) ** 2) * _oscillation(spec, times)
    if spec.noise_std > 0:
        if rng is None:
            raise DataError("a random stream is required when noise_std > 0")
        values = values + rng.normal(values.shape, std=spec.noise_std, dtype=np.float64)
    return SensorSequence(rate, values)


def generate_sessions(
    specs: Sequence[MotionClassSpec],
    windows_per_class: Mapping[str, int],
    seed: int,
    duration_s: float = 3.0,
    rate: float = 100.0,
) -> Dict[str, List[Session]]:
    """
    One window-length session per (split, class, index), each with its own
    random phase. Splits draw from independent streams.
    """
    if len(specs) < 2:
        raise DataError("at least two motion classes are required")
    ids = [spec.class_id for spec in specs]
    if sorted(ids) != list(range(len(specs))):
        raise DataError(f"class ids must be 0..{len(specs) - 1}, got {ids}")
    root = Rng(seed, "synth")
    sessions: Dict[str, List[Session]] = {}
    for split in SPLITS:
        count = int(windows_per_class.get(split, 0))
        if count <= 0:
            raise DataError(f"zero windows requested for split '{split}'")
        stream = root.spawn(split)
        phases = stream.spawn("phase").uniform((len(specs), count), 0.0, 2.0 * np.pi)
        noise = stream.spawn("noise")
        sessions[split] = []
        for spec in specs:
            for index in range(count):
                drawn = spec.model_copy(update={"phase": float(phases[spec.class_id, index])})
                session_id = f"{split}-{spec.name}-{index:04d}"
                sessions[split].append(Session(
                    session_id=session_id,
                    pose=generate_trajectory(drawn, duration_s, rate),
                    sensor=analytic_accel(drawn, duration_s, rate, noise.spawn(session_id)),
                    labels=LabelTrack(default=spec.class_id),
                    split=split,
                ))
    logger.info(
        "generated %s synthetic sessions",
        ", ".join(f"{len(v)} {k}" for k, v in sessions.items()),
    )
    return sessions


def generate_dataset(
    specs: Sequence[MotionClassSpec],
    windows_per_class: Mapping[str, int],
    seed: int,
    duration_s: float = 3.0,
    rate: float = 100.0,
) -> Dict[str, List[LabeledWindow]]:
    """
    Balanced train/val/test windows (raw sensor units).

    Returns:
        {"train": [...], "val": [...], "test": [...]}
    """
    processor = SessionProcessor(window_s=duration_s, stride_s=duration_s, rate_hz=rate)
    return {
        split: [window for session in sessions for window in processor.process_session(session)]
        for split, sessions in generate_sessions(specs, windows_per_class, seed, duration_s, rate).items()
    }


def dominant_frequency(sensor: np.ndarray, rate: float, oversample: int = 4) -> float:
    """Peak (non-DC) frequency of the summed per-axis power spectrum of a [3, T] window."""
    sensor = np.asarray(sensor, dtype=np.float64)
    centred = sensor - sensor.mean(axis=-1, keepdims=True)
    n = centred.shape[-1] * oversample
    power = (np.abs(np.fft.rfft(centred, n=n, axis=-1)) ** 2).sum(axis=0)
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    power[0] = 0.0
    return float(freqs[int(np.argmax(power))])


def band_energy_classify(
    sensor_windows: np.ndarray,
    specs: Sequence[MotionClassSpec],
    rate: float = 100.0,
) -> np.ndarray:
    """
    Oracle classifier: nearest class frequency to each window's dominant
    frequency.

    Args:
        sensor_windows: [N, 3, T]
        specs: Class table the windows were generated from
        rate: Sample rate of the windows

    Returns:
        [N] predicted class ids
    """
    freqs = np.array([spec.frequency for spec in specs])
    ids = np.array([spec.class_id for spec in specs])
    peaks = np.array([dominant_frequency(window, rate) for window in np.asarray(sensor_windows)])
    return ids[np.abs(peaks[:, None] - freqs[None, :]).argmin(axis=1)]
