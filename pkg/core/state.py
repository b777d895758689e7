"""
Run State

Records produced by training: the per-epoch history, one result per seed
and the multi-seed aggregate that feeds the report file.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np


REPORT_METRICS = ("f1", "accuracy", "test_mse", "stopped_epoch")


@dataclass
class EpochRecord:
    """One line of a training history."""

    epoch: int
    """1-based epoch number"""

    loss: float
    """Mean total training loss over the epoch's batches"""

    mse: float
    activity: float
    similarity: float

    val_f1: Optional[float] = None
    """Validation macro-F1 (classification stages only)"""

    val_mse: Optional[float] = None
    """Validation regression MSE (stages that train a regressor)"""


@dataclass
class SeedResult:
    """Test metrics of the best-epoch snapshot for one seed."""

    method: str
    seed: int
    f1: float
    accuracy: float
    test_mse: Optional[float]
    """None for methods without a regressor"""

    stopped_epoch: int
    """Last epoch actually run"""

    best_epoch: int
    history: List[EpochRecord] = field(default_factory=list)

    regression_history: List[EpochRecord] = field(default_factory=list)
    """Stage-1 history of the two-step method"""

    confusion: Optional[np.ndarray] = None

    def metric(self, name: str) -> Optional[float]:
        value = getattr(self, name)
        return None if value is None else float(value)


@dataclass
class MetricSummary:
    mean: float
    std: float
    """Population (divide by N) standard deviation"""


@dataclass
class RunResult:
    """All seeds of one method, ordered by seed."""

    method: str
    seeds: List[SeedResult] = field(default_factory=list)

    def __post_init__(self):
        self.seeds = sorted(self.seeds, key=lambda result: result.seed)

    def aggregate(self) -> Dict[str, Optional[MetricSummary]]:
        """mean and population std per report metric over exactly the recorded seeds."""
        summary: Dict[str, Optional[MetricSummary]] = {}
        for name in REPORT_METRICS:
            values = [result.metric(name) for result in self.seeds]
            if not values or any(v is None for v in values):
                summary[name] = None
                continue
            array = np.asarray(values, dtype=np.float64)
            summary[name] = MetricSummary(float(array.mean()), float(array.std(ddof=0)))
        return summary
