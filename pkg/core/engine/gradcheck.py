"""
Finite-Difference Gradient Checks

Compares backward() against central differences. Non-scalar op outputs are
reduced with a fixed random projection so every output element contributes.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from core.engine import functional as fn
from core.engine.rng import Rng
from core.engine.tensor import Tensor, no_grad


logger = logging.getLogger(__name__)

TOLERANCES = {np.dtype(np.float64): 1e-5, np.dtype(np.float32): 1e-3}
EPSILONS = {np.dtype(np.float64): 1e-6, np.dtype(np.float32): 1e-3}


@dataclass
class GradCheckResult:
    op: str
    dtype: str
    points: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)


def finite_diff_check(
    op: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    epsilon: float = 1e-6,
    projection_seed: int = 0,
) -> float:
    """
    Maximum relative gradient error of op over its tensor inputs.

    The error for one input is |analytic - numeric| / (|analytic| + |numeric|)
    in the L2 norm; an input whose gradients are both zero scores 0.

    Args:
        op: Callable mapping the inputs to a Tensor
        inputs: Tensors to differentiate against (their data is perturbed in place
            and restored)
        epsilon: Central-difference step

    Returns:
        Largest relative error across inputs
    """
    with no_grad():
        probe = op(*inputs)
    weights = None
    if probe.size != 1:
        weights = Rng(projection_seed, "gradcheck/projection").normal(probe.shape, dtype=np.float64)

    def numeric_objective() -> float:
        with no_grad():
            out = op(*inputs).data.astype(np.float64)
        return float(out.sum() if weights is None else (out * weights).sum())

    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = op(*inputs)
    loss = out.sum() if weights is None else (out * Tensor(weights.astype(out.dtype))).sum()
    loss.backward()

    worst = 0.0
    for t in inputs:
        analytic = np.zeros(t.shape) if t.grad is None else t.grad.astype(np.float64)
        numeric = np.zeros(t.shape)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + epsilon
            upper = float(flat[i])
            plus = numeric_objective()
            flat[i] = original - epsilon
            lower = float(flat[i])
            minus = numeric_objective()
            flat[i] = original
            # Step actually taken after rounding to the tensor dtype
            numeric.reshape(-1)[i] = (plus - minus) / (upper - lower)
        denominator = np.linalg.norm(analytic) + np.linalg.norm(numeric)
        if denominator > 0:
            worst = max(worst, float(np.linalg.norm(analytic - numeric) / denominator))
    return worst


# Suite

CaseBuilder = Callable[[Rng, np.dtype], Tuple[Callable[..., Tensor], List[Tensor]]]


def _t(values: np.ndarray, dtype) -> Tensor:
    return Tensor(values, dtype=dtype)


def _away_from_zero(rng: Rng, shape, dtype) -> np.ndarray:
    magnitude = rng.uniform(shape, 0.1, 1.0)
    sign = np.where(rng.uniform(shape) < 0.5, -1.0, 1.0)
    return (sign * magnitude).astype(dtype)


def _distinct(rng: Rng, shape, dtype) -> np.ndarray:
    # Values at least 0.1 apart so no pooling window has a near-tie
    n = int(np.prod(shape))
    values = rng.permutation(n) * 0.1 + rng.uniform(n, 0.0, 0.01)
    return values.reshape(shape).astype(dtype)


def _case_linear(rng, dtype):
    return fn.linear, [_t(rng.normal((3, 4), dtype=dtype), dtype),
                       _t(rng.normal((5, 4), dtype=dtype), dtype),
                       _t(rng.normal(5, dtype=dtype), dtype)]


def _case_conv1d(rng, dtype):
    def op(x, w, b):
        return fn.conv1d(x, w, b, stride=2, dilation=2, padding=1)
    return op, [_t(rng.normal((2, 3, 12), dtype=dtype), dtype),
                _t(rng.normal((4, 3, 3), dtype=dtype), dtype),
                _t(rng.normal(4, dtype=dtype), dtype)]


def _case_conv2d(rng, dtype):
    def op(x, w, b):
        return fn.conv2d(x, w, b, stride=(1, 1), dilation=(1, 4), padding=(1, 4))
    return op, [_t(rng.normal((2, 2, 3, 10), dtype=dtype), dtype),
                _t(rng.normal((3, 2, 3, 3), dtype=dtype), dtype),
                _t(rng.normal(3, dtype=dtype), dtype)]


def _case_pad2d(rng, dtype):
    def op(x):
        return fn.pad2d(x, (1, 1, 4, 0))
    return op, [_t(rng.normal((2, 2, 3, 5), dtype=dtype), dtype)]


def _case_leaky_relu(rng, dtype):
    def op(x):
        return fn.leaky_relu(x, 0.01)
    return op, [_t(_away_from_zero(rng, (4, 6), dtype), dtype)]


def _case_batchnorm_train(rng, dtype):
    channels = 3

    def op(x, gamma, beta):
        return fn.batchnorm1d(
            x, gamma, beta,
            np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype),
            training=True,
        )
    return op, [_t(rng.normal((4, channels, 5), dtype=dtype), dtype),
                _t(rng.uniform(channels, 0.5, 1.5, dtype=dtype), dtype),
                _t(rng.normal(channels, dtype=dtype), dtype)]


def _case_batchnorm_eval(rng, dtype):
    channels = 3
    mean = rng.normal(channels, dtype=dtype)
    var = rng.uniform(channels, 0.5, 2.0, dtype=dtype)

    def op(x, gamma, beta):
        return fn.batchnorm1d(x, gamma, beta, mean.copy(), var.copy(), training=False)
    return op, [_t(rng.normal((4, channels, 5), dtype=dtype), dtype),
                _t(rng.uniform(channels, 0.5, 1.5, dtype=dtype), dtype),
                _t(rng.normal(channels, dtype=dtype), dtype)]


def _case_dropout(rng, dtype):
    seed = int(rng.permutation(1000)[0])

    def op(x):
        # Fresh stream per call so every evaluation draws the same mask
        return fn.dropout(x, 0.3, training=True, rng=Rng(seed, "gradcheck/dropout"))
    return op, [_t(rng.normal((4, 5), dtype=dtype), dtype)]


def _case_maxpool1d(rng, dtype):
    def op(x):
        return fn.maxpool1d(x, 3, 2)
    return op, [_t(_distinct(rng, (2, 3, 9), dtype), dtype)]


def _case_mse(rng, dtype):
    return fn.mse, [_t(rng.normal((3, 4), dtype=dtype), dtype),
                    _t(rng.normal((3, 4), dtype=dtype), dtype)]


def _case_cosine_sim(rng, dtype):
    return fn.cosine_sim, [_t(rng.normal((3, 5), dtype=dtype), dtype),
                           _t(rng.normal((3, 5), dtype=dtype), dtype)]


def _case_cross_entropy(rng, dtype):
    targets = rng.permutation(4)[:3]
    weights = rng.uniform(4, 0.5, 2.0)

    def op(logits):
        return fn.weighted_cross_entropy(logits, targets, weights)
    return op, [_t(rng.normal((3, 4), dtype=dtype), dtype)]


def _case_arithmetic(rng, dtype):
    def op(a, b):
        return ((a * b - a) ** 2).mean() + 0.5 * b.sum()
    return op, [_t(rng.normal((3, 4), dtype=dtype), dtype),
                _t(rng.normal((3, 4), dtype=dtype), dtype)]


GRADIENT_SUITE: Dict[str, CaseBuilder] = {
    "linear": _case_linear,
    "conv1d": _case_conv1d,
    "conv2d": _case_conv2d,
    "pad2d": _case_pad2d,
    "leaky_relu": _case_leaky_relu,
    "batchnorm1d_train": _case_batchnorm_train,
    "batchnorm1d_eval": _case_batchnorm_eval,
    "dropout": _case_dropout,
    "maxpool1d": _case_maxpool1d,
    "mse": _case_mse,
    "cosine_sim": _case_cosine_sim,
    "weighted_cross_entropy": _case_cross_entropy,
    "tensor_arithmetic": _case_arithmetic,
}


def run_gradient_suite(dtype=np.float64, points: int = 10, seed: int = 0) -> List[GradCheckResult]:
    """
    Check every differentiable op at `points` random inputs.

    Args:
        dtype: float64 (tolerance 1e-5) or float32 (tolerance 1e-3)
        points: Random points per op
        seed: Seed of the input streams

    Returns:
        One result per op, holding the worst error across points
    """
    dtype = np.dtype(dtype)
    results = []
    for name, builder in GRADIENT_SUITE.items():
        rng = Rng(seed, f"gradcheck/{name}")
        worst = 0.0
        for _ in range(points):
            op, inputs = builder(rng, dtype)
            worst = max(worst, finite_diff_check(op, inputs, EPSILONS[dtype]))
        result = GradCheckResult(name, dtype.name, points, worst, TOLERANCES[dtype])
        logger.debug("gradcheck %s (%s): max error %.3e", name, dtype.name, worst)
        results.append(result)
    return results
