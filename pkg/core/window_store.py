"""
Window Store

Preprocessed windows on disk, one folder per source session, plus an
index tracking each session's content hash so a refresh only re-processes
sessions that changed (or all of them when the preprocessing settings
change or a refresh is forced).
"""

import hashlib
import json
import logging
import shutil
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np

from core.errors import SchemaError
from core.formats.array_container import load_array
from core.preprocessing import LabeledWindow, Session, SessionProcessor


logger = logging.getLogger(__name__)

INDEX_NAME = "index.json"


def hash_session(session: Session) -> str:
    """SHA-256 over everything preprocessing reads from a session."""
    digest = hashlib.sha256()
    header = {
        "id": session.session_id,
        "split": session.split,
        "joints": list(session.pose.joints),
        "pose_rate": session.pose.rate,
        "sensor_rate": session.sensor.rate,
        "segments": [list(segment) for segment in session.labels.segments],
        "default": session.labels.default,
    }
    digest.update(json.dumps(header, sort_keys=True).encode("utf-8"))
    digest.update(np.ascontiguousarray(session.pose.positions, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(session.sensor.values, dtype="<f8").tobytes())
    return digest.hexdigest()


def processing_key(processor: SessionProcessor, segmented: bool) -> Dict:
    return {
        "window": processor.window,
        "stride": processor.stride,
        "rate_hz": processor.rate_hz,
        "order": processor.order,
        "scale_window_s": processor.scale_window_s,
        "input_joints": list(processor.input_joints),
        "segmented": segmented,
    }


class WindowStore:
    """
    Manages preprocessed windows with change detection.

    Features:
    - Tracks source sessions and their hashes
    - Incremental refresh (only re-windows changed sessions)
    - Removal of sessions that disappeared from the source
    """

    def __init__(self, root: Union[str, Path]):
        """
        Args:
            root: Directory holding index.json and one folder per session
        """
        self.root = Path(root)
        self.index_file = self.root / INDEX_NAME
        self.index = self._load_index()

    def refresh(
        self,
        sessions: Iterable[Session],
        processor: SessionProcessor,
        segmented: bool = False,
        force: bool = False,
    ) -> Dict:
        """
        Bring the store in line with a set of source sessions.

        Args:
            sessions: Source sessions
            processor: Preprocessing pipeline
            segmented: Clip mode (one window per session)
            force: Re-process every session

        Returns:
            Refresh statistics
        """
        sessions = list(sessions)
        key = processing_key(processor, segmented)
        if self.index.get("processing") != key:
            if self.index.get("sessions"):
                logger.info("preprocessing settings changed, re-processing all sessions")
            force = True
            self.index["processing"] = key

        stats = {"total_sessions": len(sessions), "processed": 0, "skipped": 0, "deleted": 0, "windows": 0}
        current = {session.session_id for session in sessions}
        for session_id in list(self.index["sessions"]):
            if session_id not in current:
                self._remove(session_id)
                stats["deleted"] += 1

        for session in sessions:
            digest = hash_session(session)
            entry = self.index["sessions"].get(session.session_id)
            if not force and entry is not None and entry["hash"] == digest:
                stats["skipped"] += 1
                stats["windows"] += entry["windows"]
                continue
            windows = processor.process(session, segmented)
            self._write(session, windows, digest)
            stats["processed"] += 1
            stats["windows"] += len(windows)

        self._save_index()
        logger.info(
            "window store %s: %d processed, %d unchanged, %d removed, %d windows",
            self.root, stats["processed"], stats["skipped"], stats["deleted"], stats["windows"],
        )
        return stats

    def session_ids(self, split: Optional[str] = None) -> List[str]:
        return [
            session_id
            for session_id, entry in self.index["sessions"].items()
            if split is None or entry["split"] == split
        ]

    def load_session(self, session_id: str) -> List[LabeledWindow]:
        folder = self._folder(session_id)
        pose = load_array(folder / "pose.npy")
        sensor = load_array(folder / "sensor.npy")
        labels = load_array(folder / "labels.npy").astype(np.int64)
        starts = load_array(folder / "starts.npy").astype(np.int64)
        return [
            LabeledWindow(pose[i], sensor[i], int(labels[i]), session_id, int(starts[i]))
            for i in range(len(labels))
        ]

    def load_split(self, split: str) -> List[LabeledWindow]:
        return [window for session_id in self.session_ids(split) for window in self.load_session(session_id)]

    def status(self) -> Dict:
        splits: Dict[str, int] = {}
        for entry in self.index["sessions"].values():
            splits[entry["split"]] = splits.get(entry["split"], 0) + entry["windows"]
        return {
            "sessions": len(self.index["sessions"]),
            "windows_per_split": splits,
            "last_updated": self.index.get("last_updated"),
        }

    def _folder(self, session_id: str) -> Path:
        if not session_id or "/" in session_id or "\\" in session_id or session_id in (".", ".."):
            raise SchemaError(f"session id '{session_id}' cannot be used as a folder name")
        return self.root / "sessions" / session_id

    def _write(self, session: Session, windows: List[LabeledWindow], digest: str) -> None:
        folder = self._folder(session.session_id)
        folder.mkdir(parents=True, exist_ok=True)
        np.save(folder / "pose.npy", np.stack([w.pose for w in windows]).astype("<f8"))
        np.save(folder / "sensor.npy", np.stack([w.sensor for w in windows]).astype("<f8"))
        np.save(folder / "labels.npy", np.array([w.label for w in windows], dtype="<f8"))
        np.save(folder / "starts.npy", np.array([w.start for w in windows], dtype="<f8"))
        self.index["sessions"][session.session_id] = {
            "hash": digest,
            "split": session.split,
            "windows": len(windows),
            "updated_at": datetime.now().isoformat(),
        }

    def _remove(self, session_id: str) -> None:
        shutil.rmtree(self._folder(session_id), ignore_errors=True)
        del self.index["sessions"][session_id]
        logger.debug("removed session %s from the window store", session_id)

    def _load_index(self) -> Dict:
        if self.index_file.exists():
            try:
                with open(self.index_file, encoding="utf-8") as f:
                    index = json.load(f)
                if isinstance(index.get("sessions"), dict):
                    return index
            except (OSError, json.JSONDecodeError) as e:
                logger.warning("could not read %s, rebuilding: %s", self.index_file, e)
        return {"processing": None, "sessions": {}, "last_updated": None}

    def _save_index(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.index["last_updated"] = datetime.now().isoformat()
        with open(self.index_file, "w", encoding="utf-8") as f:
            json.dump(self.index, f, indent=2)
