"""
Session Processor

Turns raw pose/accelerometer sessions into aligned, normalized, labeled
windows: both modalities are linearly resampled to one rate, skeletons are
expressed relative to the mid-hip and scaled by a running median of the
neck to mid-hip distance, and streams are cut into sliding windows labeled
by majority vote.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.errors import AlignmentError, DataError, DegenerateSkeletonError, SchemaError


logger = logging.getLogger(__name__)

REQUIRED_JOINTS = ("wrist", "elbow", "shoulder", "neck", "midhip")
INPUT_JOINTS = ("wrist", "elbow", "shoulder")
DEGENERATE_SCALE = 1e-6
ORDERS = ("resample-first", "normalize-first")


@dataclass
class PoseSequence:
    """
    Skeleton stream.

    positions: [frames, joints, 3] coordinates; joints are role names
    (wrist, elbow, shoulder, neck, midhip, ...).
    """

    rate: float
    joints: Tuple[str, ...]
    positions: np.ndarray

    def __post_init__(self):
        self.joints = tuple(self.joints)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[1:] != (len(self.joints), 3):
            raise SchemaError(
                f"pose positions must be [frames, {len(self.joints)}, 3], got {self.positions.shape}"
            )
        if self.positions.shape[0] < 2:
            raise DataError("pose sequence needs at least 2 frames")
        if not np.all(np.isfinite(self.positions)):
            raise DataError("pose sequence contains non-finite coordinates")
        if self.rate <= 0:
            raise DataError(f"pose rate must be positive, got {self.rate}")

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    def joint(self, name: str) -> np.ndarray:
        try:
            return self.positions[:, self.joints.index(name)]
        except ValueError:
            raise SchemaError(f"joint '{name}' missing from pose (have {', '.join(self.joints)})")


@dataclass
class SensorSequence:
    """3-axis accelerometer stream, values [samples, 3]."""

    rate: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != 3:
            raise SchemaError(f"sensor values must be [samples, 3], got {self.values.shape}")
        if self.values.shape[0] < 2:
            raise DataError("sensor sequence needs at least 2 samples")
        if not np.all(np.isfinite(self.values)):
            raise DataError("sensor sequence contains non-finite values")
        if self.rate <= 0:
            raise DataError(f"sensor rate must be positive, got {self.rate}")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


@dataclass
class LabelTrack:
    """
    Activity segments in seconds. Times outside every segment get the
    default class (rest / no activity).
    """

    segments: List[Tuple[float, float, int]] = field(default_factory=list)
    default: int = 0

    def sample(self, times: np.ndarray) -> np.ndarray:
        labels = np.full(len(times), self.default, dtype=np.int64)
        # Earlier segments win where segments overlap
        for start, end, label in reversed(self.segments):
            labels[(times >= start) & (times < end)] = label
        return labels


@dataclass
class Session:
    """One recording (or segmented clip) from a dataset adapter."""

    session_id: str
    pose: PoseSequence
    sensor: SensorSequence
    labels: LabelTrack
    split: str = "train"


@dataclass
class NormStats:
    """Per-channel sensor statistics from the training split."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if np.any(self.std <= 0):
            channels = np.flatnonzero(self.std <= 0).tolist()
            raise DataError(f"zero standard deviation in sensor channel(s) {channels}")


@dataclass
class LabeledWindow:
    """pose [3 coords, 3 joints, T], sensor [3, T], one activity label."""

    pose: np.ndarray
    sensor: np.ndarray
    label: int
    session_id: str = ""
    start: int = 0


# Resampling

def resample_linear(series: np.ndarray, source_rate: float, target_rate: float) -> np.ndarray:
    """
    Linearly interpolate a [n, ...] series onto a k / target_rate grid.

    The output spans [0, (n - 1) / source_rate] with
    floor((n - 1) * target_rate / source_rate) + 1 samples; samples that fall
    on source timestamps reproduce the source values exactly.
    """
    series = np.asarray(series, dtype=np.float64)
    n = series.shape[0]
    if n < 2:
        raise DataError(f"resampling needs at least 2 samples, got {n}")
    if source_rate <= 0 or target_rate <= 0:
        raise DataError(f"rates must be positive, got {source_rate} -> {target_rate}")
    if source_rate == target_rate:
        return series.copy()

    n_out = int(math.floor((n - 1) * target_rate / source_rate + 1e-9)) + 1
    position = (np.arange(n_out) * float(source_rate)) / float(target_rate)
    left = np.minimum(np.floor(position).astype(np.int64), n - 2)
    frac = position - left
    flat = series.reshape(n, -1)
    out = flat[left] * (1.0 - frac)[:, None] + flat[left + 1] * frac[:, None]
    return out.reshape((n_out,) + series.shape[1:])


# Skeleton normalization

def _half_window(w_seconds: float, rate: float) -> int:
    return int(round(w_seconds * rate / 2.0))


def neck_midhip_distances(pose: PoseSequence) -> np.ndarray:
    return np.linalg.norm(pose.joint("neck") - pose.joint("midhip"), axis=1)


def neck_midhip_scale(pose: PoseSequence, t: int, w_seconds: float = 3.0) -> float:
    """Median neck to mid-hip distance over frames [t - w/2, t + w/2], clamped to the sequence."""
    half = _half_window(w_seconds, pose.rate)
    distances = neck_midhip_distances(pose)
    scale = float(np.median(distances[max(0, t - half):t + half + 1]))
    if scale < DEGENERATE_SCALE:
        raise DegenerateSkeletonError(f"neck to mid-hip scale {scale:.3g} at frame {t}")
    return scale


def neck_midhip_scales(pose: PoseSequence, w_seconds: float = 3.0, chunk: int = 8192) -> np.ndarray:
    """neck_midhip_scale for every frame at once."""
    half = _half_window(w_seconds, pose.rate)
    distances = neck_midhip_distances(pose)
    n = distances.shape[0]
    scales = np.empty(n)

    width = 2 * half + 1
    if n >= width:
        windows = sliding_window_view(distances, width)
        for start in range(0, windows.shape[0], chunk):
            block = windows[start:start + chunk]
            scales[half + start:half + start + block.shape[0]] = np.median(block, axis=1)
        edges = list(range(min(half, n))) + list(range(max(n - half, half), n))
    else:
        edges = list(range(n))
    for t in edges:
        scales[t] = np.median(distances[max(0, t - half):t + half + 1])

    if np.any(scales < DEGENERATE_SCALE):
        frame = int(np.argmax(scales < DEGENERATE_SCALE))
        raise DegenerateSkeletonError(f"neck to mid-hip scale {scales[frame]:.3g} at frame {frame}")
    return scales


def scale_value(v, scale_t):
    """Map v in [0, scale_t] onto [-1, 1]."""
    return -1.0 + (v / scale_t) * 2.0


def normalize_skeleton(pose: PoseSequence, w_seconds: float = 3.0) -> PoseSequence:
    """Mid-hip-relative coordinates scaled per frame by the median neck to mid-hip distance."""
    for name in ("neck", "midhip"):
        pose.joint(name)
    scales = neck_midhip_scales(pose, w_seconds)
    relative = pose.positions - pose.joint("midhip")[:, None, :]
    return PoseSequence(pose.rate, pose.joints, scale_value(relative, scales[:, None, None]))


def select_joints(pose: PoseSequence, names: Sequence[str] = INPUT_JOINTS) -> np.ndarray:
    """[frames, len(names), 3] in the requested joint order."""
    return np.stack([pose.joint(name) for name in names], axis=1)


# Standardization

def standardize_fit(sensor_windows: np.ndarray) -> NormStats:
    """
    Per-channel mean and population std over training windows.

    Args:
        sensor_windows: [N, 3, T] (or [3, T])
    """
    data = np.asarray(sensor_windows, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    axes = (0, 2)
    return NormStats(data.mean(axis=axes), data.std(axis=axes))


def standardize_apply(sensor: np.ndarray, stats: NormStats) -> np.ndarray:
    """(x - mean) / std per channel for arrays shaped [..., 3, T]."""
    sensor = np.asarray(sensor)
    return (sensor - stats.mean[:, None]) / stats.std[:, None]


# Windowing

def majority_label(labels: np.ndarray) -> int:
    """Most frequent label; ties go to the lowest class index."""
    return int(np.bincount(np.asarray(labels, dtype=np.int64)).argmax())


def make_windows(
    pose: np.ndarray,
    sensor: np.ndarray,
    labels: np.ndarray,
    window: int = 300,
    stride: int = 20,
    session_id: str = "",
) -> List[LabeledWindow]:
    """
    Cut aligned streams into sliding windows at offsets 0, stride, 2*stride, ...

    Args:
        pose: [n, 3 joints, 3 coords] input joints at the common rate
        sensor: [n, 3]
        labels: [n] per-sample class indices
        window, stride: In samples

    Returns:
        Windows with pose [3, 3, window] and sensor [3, window]; the final
        partial window is dropped
    """
    n = len(sensor)
    if len(pose) != n or len(labels) != n:
        raise AlignmentError(
            f"stream lengths differ: pose {len(pose)}, sensor {n}, labels {len(labels)}"
        )
    if n < window:
        raise DataError(f"stream of {n} samples is shorter than one window ({window})")
    if stride < 1:
        raise DataError(f"window stride must be positive, got {stride}")

    windows = []
    for start in range(0, n - window + 1, stride):
        stop = start + window
        windows.append(LabeledWindow(
            pose=np.ascontiguousarray(pose[start:stop].transpose(2, 1, 0)),
            sensor=np.ascontiguousarray(sensor[start:stop].T),
            label=majority_label(labels[start:stop]),
            session_id=session_id,
            start=start,
        ))
    return windows


def fit_clip(array: np.ndarray, length: int) -> np.ndarray:
    """Edge-replicate (split evenly at both ends) or centre-crop [n, ...] to `length`."""
    n = array.shape[0]
    if n == length:
        return array
    if n > length:
        start = (n - length) // 2
        return array[start:start + length]
    deficit = length - n
    pad = [(deficit // 2, deficit - deficit // 2)] + [(0, 0)] * (array.ndim - 1)
    return np.pad(array, pad, mode="edge")


class SessionProcessor:
    """
    Applies the full preprocessing pipeline to dataset sessions.

    Features:
    - Linear resampling of both modalities to one rate
    - Skeleton normalization before or after resampling
    - Sliding windows with majority labels (continuous recordings)
    - Pad/crop to a fixed length with one label (segmented clips)
    """

    def __init__(
        self,
        window_s: float = 3.0,
        stride_s: float = 0.2,
        rate_hz: float = 100.0,
        order: str = "resample-first",
        scale_window_s: float = 3.0,
        input_joints: Sequence[str] = INPUT_JOINTS,
    ):
        """
        Args:
            window_s: Window length in seconds
            stride_s: Hop between windows in seconds
            rate_hz: Common rate both modalities are resampled to
            order: "resample-first" or "normalize-first"
            scale_window_s: Span of the running-median skeleton scale
            input_joints: Joints forming the regressor input, in order
        """
        if order not in ORDERS:
            raise DataError(f"unknown preprocessing order '{order}' (expected one of {ORDERS})")
        self.rate_hz = float(rate_hz)
        self.window = int(round(window_s * rate_hz))
        self.stride = max(1, int(round(stride_s * rate_hz)))
        self.order = order
        self.scale_window_s = scale_window_s
        self.input_joints = tuple(input_joints)

    def align(self, pose: PoseSequence, sensor: SensorSequence) -> Tuple[np.ndarray, np.ndarray]:
        """
        Resample and normalize both streams.

        Returns:
            (pose [n, input joints, 3], sensor [n, 3]) at rate_hz, cropped to
            the common length
        """
        missing = [name for name in REQUIRED_JOINTS if name not in pose.joints]
        if missing:
            raise SchemaError(f"pose lacks required joint(s): {', '.join(missing)}")

        if self.order == "normalize-first":
            normalized = normalize_skeleton(pose, self.scale_window_s)
            positions = resample_linear(normalized.positions, pose.rate, self.rate_hz)
            resampled = PoseSequence(self.rate_hz, pose.joints, positions)
        else:
            positions = resample_linear(pose.positions, pose.rate, self.rate_hz)
            resampled = normalize_skeleton(
                PoseSequence(self.rate_hz, pose.joints, positions), self.scale_window_s
            )

        values = resample_linear(sensor.values, sensor.rate, self.rate_hz)
        n = min(resampled.n_frames, len(values))
        return select_joints(resampled, self.input_joints)[:n], values[:n]

    def process_session(self, session: Session) -> List[LabeledWindow]:
        """
        Window a continuous recording.

        Args:
            session: Session from a dataset adapter

        Returns:
            Labeled windows (raw, unstandardized sensor values)
        """
        pose, sensor = self.align(session.pose, session.sensor)
        times = np.arange(len(sensor)) / self.rate_hz
        labels = session.labels.sample(times)
        windows = make_windows(pose, sensor, labels, self.window, self.stride, session.session_id)
        logger.debug("session %s: %d windows", session.session_id, len(windows))
        return windows

    def process_clip(self, session: Session) -> LabeledWindow:
        """Fit a segmented clip to one window carrying the clip's label."""
        pose, sensor = self.align(session.pose, session.sensor)
        times = np.arange(len(sensor)) / self.rate_hz
        label = majority_label(session.labels.sample(times))
        pose = fit_clip(pose, self.window)
        sensor = fit_clip(sensor, self.window)
        return LabeledWindow(
            pose=np.ascontiguousarray(pose.transpose(2, 1, 0)),
            sensor=np.ascontiguousarray(sensor.T),
            label=label,
            session_id=session.session_id,
            start=0,
        )

    def process(self, session: Session, segmented: bool = False) -> List[LabeledWindow]:
        if segmented:
            return [self.process_clip(session)]
        return self.process_session(session)
