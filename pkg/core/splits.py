"""
Data Splits

Loads sessions for the configured dataset kind, windows them (through the
window store when one is given) and standardizes sensor channels with
statistics fitted on the training split only.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigError, DataError
from core.formats.datasets import load_descriptor, load_mmfit_sessions
from core.formats.experiment_config import ExperimentConfig
from core.formats.interchange import read_dataset
from core.preprocessing import LabeledWindow, NormStats, Session, SessionProcessor, standardize_apply, standardize_fit
from core.settings import Settings
from core.synthdata import SPLITS, default_classes, generate_sessions
from core.window_store import WindowStore


logger = logging.getLogger(__name__)

DEFAULT_RATE_HZ = 100.0


@dataclass
class WindowSet:
    """Stacked windows: pose [N, 3, J, T], sensor [N, 3, T], labels [N]."""

    pose: np.ndarray
    sensor: np.ndarray
    labels: np.ndarray
    session_ids: Tuple[str, ...] = ()

    @classmethod
    def from_windows(cls, windows: Sequence[LabeledWindow], dtype=np.float32) -> "WindowSet":
        if not windows:
            raise DataError("cannot build a window set from zero windows")
        return cls(
            pose=np.stack([w.pose for w in windows]).astype(dtype),
            sensor=np.stack([w.sensor for w in windows]).astype(dtype),
            labels=np.array([w.label for w in windows], dtype=np.int64),
            session_ids=tuple(w.session_id for w in windows),
        )

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, indices: np.ndarray) -> "WindowSet":
        ids = tuple(self.session_ids[i] for i in indices) if self.session_ids else ()
        return WindowSet(self.pose[indices], self.sensor[indices], self.labels[indices], ids)

    def batches(self, batch_size: int, order: Optional[np.ndarray] = None) -> Iterator["WindowSet"]:
        """Consecutive batches in `order` (natural order when None); the last may be short."""
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), batch_size):
            yield self.subset(order[start:start + batch_size])

    def class_counts(self, n_classes: int) -> np.ndarray:
        return np.bincount(self.labels, minlength=n_classes)


@dataclass
class DataSplits:
    train: WindowSet
    val: WindowSet
    test: WindowSet
    norm: NormStats
    n_classes: int
    class_names: List[str]
    segmented: bool = False
    rate_hz: float = DEFAULT_RATE_HZ


def load_sessions(config: ExperimentConfig, settings: Settings) -> Tuple[List[Session], List[str], bool]:
    """
    Sessions of the configured dataset.

    Returns:
        (sessions, class names, segmented layout flag)
    """
    dataset = config.dataset
    if dataset.kind == "synthetic":
        synth = settings.synth
        n_classes = config.synth.n_classes or synth.n_classes
        noise = synth.noise_std if config.synth.noise_std is None else config.synth.noise_std
        specs = default_classes(n_classes, noise)
        counts = {
            "train": config.synth.train_windows or synth.train_windows,
            "val": config.synth.val_windows or synth.val_windows,
            "test": config.synth.test_windows or synth.test_windows,
        }
        by_split = generate_sessions(specs, counts, config.synth.seed, config.window.size_s,
                                     config.window.rate_hz or DEFAULT_RATE_HZ)
        sessions = [session for split in SPLITS for session in by_split[split]]
        return sessions, [spec.name for spec in specs], False

    if dataset.path is None:
        raise ConfigError(f"dataset.path is required for dataset.kind = {dataset.kind}")
    root = Path(dataset.path)
    if dataset.kind == "interchange":
        manifest, sessions = read_dataset(root)
        return sessions, manifest.class_names, manifest.layout == "segmented"

    if dataset.descriptor is None:
        raise ConfigError("dataset.descriptor is required for dataset.kind = mmfit")
    descriptor = load_descriptor(dataset.descriptor)
    return load_mmfit_sessions(root, descriptor), descriptor.class_names, False


def make_processor(config: ExperimentConfig, sessions: Sequence[Session], segmented: bool) -> SessionProcessor:
    """Segmented clips default to the sensor's native rate, recordings to 100 Hz."""
    rate = config.window.rate_hz
    if rate is None:
        rate = sessions[0].sensor.rate if segmented and sessions else DEFAULT_RATE_HZ
    return SessionProcessor(
        window_s=config.window.size_s,
        stride_s=config.window.stride_s,
        rate_hz=rate,
        order=config.preprocess.order,
    )


def standardize_splits(
    windows: Dict[str, List[LabeledWindow]],
    n_classes: int,
    class_names: Sequence[str],
    dtype=np.float32,
    segmented: bool = False,
    rate_hz: float = DEFAULT_RATE_HZ,
) -> DataSplits:
    """Fit sensor statistics on train windows and apply them to every split."""
    for split in SPLITS:
        if not windows.get(split):
            raise DataError(f"split '{split}' has no windows")
        labels = np.array([w.label for w in windows[split]])
        if labels.min() < 0 or labels.max() >= n_classes:
            raise DataError(f"split '{split}' has labels outside 0..{n_classes - 1}")

    raw = {split: WindowSet.from_windows(windows[split], np.float64) for split in SPLITS}
    norm = standardize_fit(raw["train"].sensor)
    sets = {
        split: WindowSet(
            pose=ws.pose.astype(dtype),
            sensor=standardize_apply(ws.sensor, norm).astype(dtype),
            labels=ws.labels,
            session_ids=ws.session_ids,
        )
        for split, ws in raw.items()
    }
    logger.info(
        "windows: %s",
        ", ".join(f"{len(ws)} {split}" for split, ws in sets.items()),
    )
    return DataSplits(sets["train"], sets["val"], sets["test"], norm, n_classes, list(class_names),
                      segmented, rate_hz)


def build_splits(
    config: ExperimentConfig,
    settings: Settings,
    store_dir: Optional[Path] = None,
    force: bool = False,
) -> DataSplits:
    """
    Load, window and standardize the configured dataset.

    Args:
        config: Experiment config
        settings: Ambient settings (synthetic defaults)
        store_dir: Window store location; windows are kept in memory only when None
        force: Re-process every session in the store

    Returns:
        DataSplits ready for training
    """
    sessions, class_names, segmented = load_sessions(config, settings)
    n_classes = config.dataset.n_classes or len(class_names)
    processor = make_processor(config, sessions, segmented)

    if store_dir is not None:
        store = WindowStore(store_dir)
        store.refresh(sessions, processor, segmented, force)
        windows = {split: store.load_split(split) for split in SPLITS}
    else:
        windows = {split: [] for split in SPLITS}
        for session in sessions:
            windows[session.split].extend(processor.process(session, segmented))

    return standardize_splits(windows, n_classes, class_names, np.dtype(config.train.dtype),
                              segmented, processor.rate_hz)
