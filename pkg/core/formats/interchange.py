"""
Interchange Files

Plain comma-separated matrices with a header line; the first column is
sample time in seconds and must be strictly increasing. A dataset in
interchange form is a directory:

    manifest.yaml
    sessions/<session_id>/pose.csv     time_s, <joint>_x, <joint>_y, <joint>_z, ...
    sessions/<session_id>/accel.csv    time_s, ax, ay, az
    sessions/<session_id>/labels.csv   time_s (segment start), end_s, label
"""

import csv
import logging
from pathlib import Path
from typing import Iterable, List, Literal, Sequence, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError

from core.errors import MissingModalityError, SchemaError
from core.preprocessing import LabelTrack, PoseSequence, SensorSequence, Session


logger = logging.getLogger(__name__)

TIME_COLUMN = "time_s"
ACCEL_COLUMNS = ("ax", "ay", "az")
LABEL_COLUMNS = ("end_s", "label")
MANIFEST_NAME = "manifest.yaml"


def _format(value: float) -> str:
    return repr(float(value))


def write_matrix(path: Union[str, Path], header: Sequence[str], rows: np.ndarray) -> Path:
    """Write rows [n, len(header)]; floats keep their shortest exact repr."""
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, len(header))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(v) for v in row])
    return path


def read_matrix(path: Union[str, Path], time_first: bool = True) -> Tuple[List[str], np.ndarray]:
    """
    Read an interchange matrix.

    Args:
        path: CSV file
        time_first: Require the first column to be a strictly increasing time_s

    Returns:
        (header, values [n, columns])
    """
    path = Path(path)
    if not path.exists():
        raise MissingModalityError(f"missing file {path}")
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = [name.strip() for name in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty (no header line)")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{line_no}: expected {len(header)} columns, found {len(row)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as e:
                raise SchemaError(f"{path}:{line_no}: {e}")

    values = np.array(rows, dtype=np.float64).reshape(-1, len(header))
    if time_first:
        if header[0] != TIME_COLUMN:
            raise SchemaError(f"{path}: first column must be '{TIME_COLUMN}', found '{header[0]}'")
        if np.any(np.diff(values[:, 0]) <= 0):
            raise SchemaError(f"{path}: time column is not strictly increasing")
    return header, values


class SessionEntry(BaseModel):
    id: str
    split: Literal["train", "val", "test"]
    default_label: int = Field(default=0, ge=0)
    pose_rate_hz: float = Field(gt=0)
    accel_rate_hz: float = Field(gt=0)


class InterchangeManifest(BaseModel):
    """Dataset-level description stored as manifest.yaml."""

    name: str
    layout: Literal["continuous", "segmented"] = "continuous"
    joints: List[str]
    class_names: List[str] = Field(min_length=2)
    sessions: List[SessionEntry] = Field(default_factory=list)

    def session(self, session_id: str) -> SessionEntry:
        for entry in self.sessions:
            if entry.id == session_id:
                return entry
        raise SchemaError(f"session '{session_id}' is not listed in the manifest")


def _times(n: int, rate: float) -> np.ndarray:
    return np.arange(n) / rate


def write_session(root: Union[str, Path], session: Session) -> Path:
    """Write one session's three matrices under root/sessions/<id>/."""
    folder = Path(root) / "sessions" / session.session_id
    pose = session.pose
    header = [TIME_COLUMN] + [f"{joint}_{axis}" for joint in pose.joints for axis in "xyz"]
    write_matrix(folder / "pose.csv", header,
                 np.column_stack([_times(pose.n_frames, pose.rate), pose.positions.reshape(pose.n_frames, -1)]))
    sensor = session.sensor
    write_matrix(folder / "accel.csv", [TIME_COLUMN, *ACCEL_COLUMNS],
                 np.column_stack([_times(sensor.n_samples, sensor.rate), sensor.values]))
    segments = sorted(session.labels.segments)
    write_matrix(folder / "labels.csv", [TIME_COLUMN, *LABEL_COLUMNS],
                 np.array(segments, dtype=np.float64).reshape(-1, 3))
    return folder


def write_dataset(
    root: Union[str, Path],
    name: str,
    sessions: Iterable[Session],
    class_names: Sequence[str],
    layout: str = "continuous",
) -> InterchangeManifest:
    """
    Write sessions plus manifest.yaml under root.

    Returns:
        The manifest that was written
    """
    root = Path(root)
    sessions = list(sessions)
    if not sessions:
        raise SchemaError("refusing to write an interchange dataset without sessions")
    joints = list(sessions[0].pose.joints)
    entries = []
    for session in sessions:
        if list(session.pose.joints) != joints:
            raise SchemaError(f"session '{session.session_id}' has a different joint list")
        write_session(root, session)
        entries.append(SessionEntry(
            id=session.session_id,
            split=session.split,
            default_label=session.labels.default,
            pose_rate_hz=session.pose.rate,
            accel_rate_hz=session.sensor.rate,
        ))
    manifest = InterchangeManifest(
        name=name, layout=layout, joints=joints, class_names=list(class_names), sessions=entries
    )
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as f:
        yaml.safe_dump(manifest.model_dump(mode="json"), f, sort_keys=False)
    logger.info("wrote %d sessions to %s", len(entries), root)
    return manifest


def read_manifest(root: Union[str, Path]) -> InterchangeManifest:
    path = Path(root) / MANIFEST_NAME
    if not path.exists():
        raise MissingModalityError(f"no {MANIFEST_NAME} in {root}")
    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    try:
        return InterchangeManifest.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        raise SchemaError(f"{path}: {'.'.join(str(p) for p in first['loc'])}: {first['msg']}")


def read_session(root: Union[str, Path], manifest: InterchangeManifest, session_id: str) -> Session:
    entry = manifest.session(session_id)
    folder = Path(root) / "sessions" / session_id

    header, pose_rows = read_matrix(folder / "pose.csv")
    expected = [TIME_COLUMN] + [f"{joint}_{axis}" for joint in manifest.joints for axis in "xyz"]
    if header != expected:
        raise SchemaError(f"{folder / 'pose.csv'}: header does not match the manifest joints")
    positions = pose_rows[:, 1:].reshape(len(pose_rows), len(manifest.joints), 3)

    header, accel_rows = read_matrix(folder / "accel.csv")
    if header != [TIME_COLUMN, *ACCEL_COLUMNS]:
        raise SchemaError(f"{folder / 'accel.csv'}: expected columns {TIME_COLUMN}, {', '.join(ACCEL_COLUMNS)}")

    header, label_rows = read_matrix(folder / "labels.csv")
    if header != [TIME_COLUMN, *LABEL_COLUMNS]:
        raise SchemaError(f"{folder / 'labels.csv'}: expected columns {TIME_COLUMN}, {', '.join(LABEL_COLUMNS)}")
    segments = [(float(start), float(end), int(label)) for start, end, label in label_rows]
    for _, _, label in segments + [(0, 0, entry.default_label)]:
        if not 0 <= label < len(manifest.class_names):
            raise SchemaError(f"session '{session_id}': label {label} outside 0..{len(manifest.class_names) - 1}")

    return Session(
        session_id=session_id,
        pose=PoseSequence(entry.pose_rate_hz, manifest.joints, positions),
        sensor=SensorSequence(entry.accel_rate_hz, accel_rows[:, 1:]),
        labels=LabelTrack(segments, entry.default_label),
        split=entry.split,
    )


def read_dataset(root: Union[str, Path]) -> Tuple[InterchangeManifest, List[Session]]:
    manifest = read_manifest(root)
    return manifest, [read_session(root, manifest, entry.id) for entry in manifest.sessions]


def session_files(root: Union[str, Path], session_id: str) -> List[Path]:
    folder = Path(root) / "sessions" / session_id
    return [folder / "pose.csv", folder / "accel.csv", folder / "labels.csv"]
