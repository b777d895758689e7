import numpy as np
import pytest

from core.engine.rng import Rng
from core.formats.experiment_config import parse_config
from core.settings import Settings
from core.splits import build_splits


TINY_CONFIG = """
method = joint
dataset.kind = synthetic
synth.n_classes = 2
synth.train_windows = 4
synth.val_windows = 2
synth.test_windows = 2
synth.noise_std = 0.05
train.max_epochs = 3
train.patience = 2
train.batch_size = 4
train.seeds = 1
"""


@pytest.fixture(scope="session")
def settings():
    return Settings()


@pytest.fixture(scope="session")
def tiny_config():
    return parse_config(TINY_CONFIG)


@pytest.fixture(scope="session")
def tiny_splits(tiny_config, settings):
    """2 classes x (4 train, 2 val, 2 test) windows of 300 samples."""
    return build_splits(tiny_config, settings)


@pytest.fixture
def rng():
    return Rng(0, "tests")


def make_pose_array(n_frames: int, neck_distance: float = 1.0, seed: int = 0) -> np.ndarray:
    """[n, 5 joints, 3] in REQUIRED_JOINTS order with a fixed neck to mid-hip distance."""
    generator = np.random.default_rng(seed)
    positions = generator.normal(size=(n_frames, 5, 3))
    positions[:, 4] = 0.0
    positions[:, 3] = (0.0, neck_distance, 0.0)
    return positions
