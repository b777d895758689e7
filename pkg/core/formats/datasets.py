"""
Dataset Adapters

MM-Fit style recordings are described by a layout descriptor (YAML) so the
on-disk schema (file names, array axis order, joint order, label columns)
is data, not code. Adapters produce the same Session objects as the
interchange reader.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from core.errors import AlignmentError, MissingModalityError, SchemaError
from core.formats.array_container import load_array
from core.preprocessing import REQUIRED_JOINTS, LabelTrack, PoseSequence, SensorSequence, Session


logger = logging.getLogger(__name__)

PoseAxis = Literal["coords", "frames", "joints"]


class AccelLayout(BaseModel):
    frame_column: int = 0
    value_columns: Tuple[int, int, int] = (2, 3, 4)


class LabelLayout(BaseModel):
    has_header: bool = False
    start_column: int = 0
    end_column: int = 1
    activity_column: int = 3
    unit: Literal["frames", "seconds"] = "frames"


class MMFitDescriptor(BaseModel):
    """
    On-disk layout of one MM-Fit style release.

    Session files are resolved as <root>/<session_dir>/<file pattern> with
    "{session}" substituted.
    """

    name: str = "mmfit"
    session_dir: str = "{session}"
    pose_file: str
    accel_file: str
    labels_file: str
    pose_rate_hz: float = Field(gt=0)
    accel_rate_hz: float = Field(gt=0)
    pose_axes: Tuple[PoseAxis, PoseAxis, PoseAxis] = ("coords", "frames", "joints")
    pose_frame_index: Optional[int] = 0
    joints: List[str] = Field(min_length=1)
    roles: Dict[str, str]
    accel: AccelLayout = Field(default_factory=AccelLayout)
    labels: LabelLayout = Field(default_factory=LabelLayout)
    class_names: List[str] = Field(min_length=2)
    default_class: str
    max_offset_s: float = Field(default=2.0, ge=0)
    splits: Dict[Literal["train", "val", "test"], List[str]]

    @model_validator(mode="after")
    def _check(self) -> "MMFitDescriptor":
        if sorted(self.pose_axes) != ["coords", "frames", "joints"]:
            raise ValueError("pose_axes must name coords, frames and joints once each")
        missing = [role for role in REQUIRED_JOINTS if role not in self.roles]
        if missing:
            raise ValueError(f"roles lack {missing}")
        unknown = [name for name in self.roles.values() if name not in self.joints]
        if unknown:
            raise ValueError(f"roles reference unknown joints {unknown}")
        if self.default_class not in self.class_names:
            raise ValueError(f"default_class '{self.default_class}' is not a class name")
        return self

    def session_path(self, root: Union[str, Path], pattern: str, session_id: str) -> Path:
        return Path(root) / self.session_dir.format(session=session_id) / pattern.format(session=session_id)

    def split_of(self, session_id: str) -> str:
        for split, ids in self.splits.items():
            if session_id in ids:
                return split
        raise SchemaError(f"session '{session_id}' is not assigned to a split")


def load_descriptor(path: Union[str, Path]) -> MMFitDescriptor:
    path = Path(path)
    if not path.exists():
        raise MissingModalityError(f"dataset descriptor {path} not found")
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    try:
        return MMFitDescriptor.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise SchemaError(f"{path}: {'.'.join(str(p) for p in first['loc'])}: {first['msg']}")


def _require(path: Path, modality: str) -> Path:
    if not path.exists():
        raise MissingModalityError(f"missing {modality} file {path}")
    return path


def _read_pose(path: Path, descriptor: MMFitDescriptor) -> Tuple[np.ndarray, np.ndarray]:
    """Returns (frame numbers [n], positions [n, joints, 3])."""
    array = load_array(path)
    if array.ndim != 3:
        raise SchemaError(f"{path}: pose array must have 3 axes, found shape {array.shape}")
    order = [descriptor.pose_axes.index(axis) for axis in ("frames", "joints", "coords")]
    array = np.transpose(array, order)
    if array.shape[2] != 3:
        raise SchemaError(f"{path}: coordinate axis has extent {array.shape[2]}, expected 3")

    index = descriptor.pose_frame_index
    joint_extent = array.shape[1] - (0 if index is None else 1)
    if joint_extent != len(descriptor.joints):
        raise SchemaError(
            f"{path}: pose holds {joint_extent} joints, descriptor lists {len(descriptor.joints)}"
        )
    if index is None:
        return np.arange(array.shape[0], dtype=np.float64), array.astype(np.float64)
    frames = array[:, index, 0].astype(np.float64)
    return frames, np.delete(array, index, axis=1).astype(np.float64)


def _read_labels(path: Path, descriptor: MMFitDescriptor) -> LabelTrack:
    layout = descriptor.labels
    scale = 1.0 / descriptor.pose_rate_hz if layout.unit == "frames" else 1.0
    segments = []
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if layout.has_header:
        rows = rows[1:]
    for line_no, row in enumerate(rows, start=1):
        if not row:
            continue
        try:
            start = float(row[layout.start_column]) * scale
            end = float(row[layout.end_column]) * scale
            activity = row[layout.activity_column].strip()
        except (IndexError, ValueError) as e:
            raise SchemaError(f"{path}:{line_no}: {e}")
        if activity not in descriptor.class_names:
            raise SchemaError(f"{path}:{line_no}: unknown activity '{activity}'")
        segments.append((start, end, descriptor.class_names.index(activity)))
    return LabelTrack(segments, descriptor.class_names.index(descriptor.default_class))


def load_mmfit_session(
    root: Union[str, Path],
    descriptor: MMFitDescriptor,
    session_id: str,
) -> Tuple[PoseSequence, SensorSequence, LabelTrack]:
    """
    Load one recording at native rates, cropped to the time range both
    modalities cover. Pose frame numbers are the common clock: pose time is
    frame / pose_rate, the accelerometer starts at its first frame tag.

    Returns:
        (pose with role-named joints, accelerometer, label segments in seconds)
    """
    pose_path = _require(descriptor.session_path(root, descriptor.pose_file, session_id), "pose")
    accel_path = _require(descriptor.session_path(root, descriptor.accel_file, session_id), "accelerometer")
    labels_path = _require(descriptor.session_path(root, descriptor.labels_file, session_id), "label")

    frames, positions = _read_pose(pose_path, descriptor)
    accel = load_array(accel_path)
    needed = max(descriptor.accel.frame_column, *descriptor.accel.value_columns) + 1
    if accel.ndim != 2 or accel.shape[1] < needed:
        raise SchemaError(f"{accel_path}: accelerometer array must be [n, >= {needed}], found {accel.shape}")
    labels = _read_labels(labels_path, descriptor)

    pose_start = frames[0] / descriptor.pose_rate_hz
    pose_end = pose_start + (len(frames) - 1) / descriptor.pose_rate_hz
    accel_start = accel[0, descriptor.accel.frame_column] / descriptor.pose_rate_hz
    accel_end = accel_start + (len(accel) - 1) / descriptor.accel_rate_hz
    if abs(pose_start - accel_start) > descriptor.max_offset_s or abs(pose_end - accel_end) > descriptor.max_offset_s:
        raise AlignmentError(
            f"session '{session_id}': pose covers {pose_start:.2f}-{pose_end:.2f} s, accelerometer "
            f"{accel_start:.2f}-{accel_end:.2f} s (tolerance {descriptor.max_offset_s} s)"
        )

    start, end = max(pose_start, accel_start), min(pose_end, accel_end)
    pose_times = pose_start + np.arange(len(frames)) / descriptor.pose_rate_hz
    accel_times = accel_start + np.arange(len(accel)) / descriptor.accel_rate_hz
    pose_keep = (pose_times >= start) & (pose_times <= end)
    accel_keep = (accel_times >= start) & (accel_times <= end)

    role_index = [descriptor.joints.index(descriptor.roles[role]) for role in REQUIRED_JOINTS]
    pose = PoseSequence(descriptor.pose_rate_hz, REQUIRED_JOINTS, positions[pose_keep][:, role_index])
    sensor = SensorSequence(descriptor.accel_rate_hz, accel[accel_keep][:, list(descriptor.accel.value_columns)])
    shifted = LabelTrack([(s - start, e - start, c) for s, e, c in labels.segments], labels.default)
    logger.debug("mmfit session %s: %d pose frames, %d accel samples", session_id, pose.n_frames, sensor.n_samples)
    return pose, sensor, shifted


def load_mmfit_sessions(root: Union[str, Path], descriptor: MMFitDescriptor) -> List[Session]:
    sessions = []
    for split, ids in descriptor.splits.items():
        for session_id in ids:
            pose, sensor, labels = load_mmfit_session(root, descriptor, session_id)
            sessions.append(Session(session_id, pose, sensor, labels, split))
    return sessions


def mmfit_session_files(root: Union[str, Path], descriptor: MMFitDescriptor, session_id: str) -> List[Path]:
    return [
        descriptor.session_path(root, pattern, session_id)
        for pattern in (descriptor.pose_file, descriptor.accel_file, descriptor.labels_file)
    ]
