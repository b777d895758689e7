"""
Evaluation

Confusion matrices, macro-F1, accuracy and regression MSE, computed in
eval mode without recording a graph.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from core.engine.tensor import Tensor, no_grad
from core.errors import DataError
from core.models import ModelBundle, Regressor
from core.splits import WindowSet


EVAL_BATCH_SIZE = 256


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DataError(f"confusion matrix must be square, got shape {counts.shape}")
        if np.any(counts < 0):
            raise DataError("confusion matrix has negative counts")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise DataError(f"{len(y_true)} true labels but {len(y_pred)} predictions")
    for name, values in (("true", y_true), ("predicted", y_pred)):
        if values.size and (values.min() < 0 or values.max() >= n_classes):
            raise DataError(f"{name} labels fall outside 0..{n_classes - 1}")
    counts = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes))


def per_class_f1(cm: ConfusionMatrix) -> np.ndarray:
    """2PR / (P + R) per class, i.e. 2TP / (row + column); 0 where undefined."""
    tp = np.diag(cm.counts).astype(np.float64)
    denominator = cm.counts.sum(axis=1) + cm.counts.sum(axis=0)
    return np.divide(2.0 * tp, denominator, out=np.zeros_like(tp), where=denominator > 0)


def macro_f1(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DataError("macro-F1 of an empty confusion matrix")
    return float(per_class_f1(cm).mean())


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise DataError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def predict(bundle: ModelBundle, windows: WindowSet, batch_size: int = EVAL_BATCH_SIZE) -> np.ndarray:
    """Class predictions from real sensor windows (F then C, eval mode)."""
    bundle.eval()
    predictions = []
    with no_grad():
        for batch in windows.batches(batch_size):
            logits = bundle.classifier(bundle.feature_extractor(Tensor(batch.sensor)))
            predictions.append(logits.numpy().argmax(axis=1))
    return np.concatenate(predictions)


def evaluate_classifier(bundle: ModelBundle, windows: WindowSet) -> Tuple[float, float, ConfusionMatrix]:
    """(macro-F1, accuracy, confusion matrix) on real windows."""
    cm = confusion_matrix(windows.labels, predict(bundle, windows), bundle.classifier.n_classes)
    return macro_f1(cm), accuracy(cm), cm


def synthesize(regressor: Regressor, windows: WindowSet, batch_size: int = EVAL_BATCH_SIZE) -> np.ndarray:
    """Regressor output [N, 3, T] in eval mode."""
    regressor.eval()
    outputs = []
    with no_grad():
        for batch in windows.batches(batch_size):
            outputs.append(regressor(Tensor(batch.pose)).numpy())
    return np.concatenate(outputs)


def test_mse(regressor: Regressor, windows: WindowSet, batch_size: int = EVAL_BATCH_SIZE) -> float:
    """Mean squared error over every element of every window (standardized units)."""
    synthetic = synthesize(regressor, windows, batch_size).astype(np.float64)
    return float(np.mean((synthetic - windows.sensor.astype(np.float64)) ** 2))


# Not a pytest test
test_mse.__test__ = False


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and population standard deviation."""
    array = np.asarray(values, dtype=np.float64)
    if array.size == 0:
        raise DataError("mean of zero values")
    return float(array.mean()), float(array.std(ddof=0))


def format_mean_std(mean: float, std: float, digits: int = 4) -> str:
    return f"{mean:.{digits}f} ± {std:.{digits}f}"
