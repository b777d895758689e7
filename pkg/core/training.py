"""
Training

Three regimes over the same window sets:

- joint: R, F and C updated together from one backward pass of
  L = MSE + alpha * L_activity + beta * L_similarity
- baseline-real: F and C on real sensor windows only
- regression-first: R alone on MSE, then R frozen while F and C train on
  paired real and synthetic windows

Every regime early-stops on a validation score and restores the
best-epoch snapshot before testing.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np

from core.engine import functional as fn
from core.engine.optim import Adam
from core.engine.rng import Rng
from core.engine.tensor import Tensor
from core.errors import ConfigError, DivergenceError, SeedRunError, ShapeError
from core.evaluation import evaluate_classifier, synthesize, test_mse
from core.formats.checkpoint import write_checkpoint
from core.formats.experiment_config import TrainConfig
from core.models import BundleSpec, FeatureExtractorSpec, ModelBundle, RegressorSpec, build_bundle
from core.splits import DataSplits, WindowSet
from core.state import EpochRecord, RunResult, SeedResult


logger = logging.getLogger(__name__)

Decision = Literal["continue", "stop"]


@dataclass(frozen=True)
class LossWeights:
    alpha: float
    beta: float
    class_weights: np.ndarray

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"loss weights must be non-negative (alpha={self.alpha}, beta={self.beta})")
        weights = np.asarray(self.class_weights, dtype=np.float64)
        if weights.ndim != 1 or np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise ConfigError("class weights must be a vector of strictly positive values")
        object.__setattr__(self, "class_weights", weights)


def class_weights_for(labels: np.ndarray, n_classes: int, mode: str = "inverse-frequency") -> np.ndarray:
    """
    Per-class loss weights, normalized to mean 1. Classes missing from the
    training labels are treated as seen once.
    """
    if mode == "uniform":
        return np.ones(n_classes)
    if mode != "inverse-frequency":
        raise ConfigError(f"unknown class weighting '{mode}'")
    counts = np.maximum(np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes), 1)
    weights = 1.0 / counts
    return weights / weights.mean()


@dataclass
class CompoundLoss:
    """Graph-carrying total plus detached components for logging."""

    total: Tensor
    mse: float = 0.0
    activity: float = 0.0
    similarity: float = 0.0


def loss_final(
    x_sensor: Tensor,
    x_synth: Tensor,
    features_real: Tensor,
    features_synth: Tensor,
    logits_real: Tensor,
    logits_synth: Tensor,
    targets: np.ndarray,
    weights: LossWeights,
    include_similarity: bool = True,
) -> CompoundLoss:
    """
    MSE + alpha * (CE(real) + CE(synthetic)) + beta * mean(1 - cos(F(x), F(x~))).

    Args:
        x_sensor, x_synth: [b, 3, T] real and regressed acceleration
        features_real, features_synth: [b, 100] feature extractor outputs
        logits_real, logits_synth: [b, n_classes]
        targets: [b] class indices
        weights: Loss weights
        include_similarity: Build the cosine term into the graph at all

    Returns:
        CompoundLoss
    """
    if features_real.shape != features_synth.shape or logits_real.shape != logits_synth.shape:
        raise ShapeError(
            f"real and synthetic branches disagree: features {features_real.shape} vs {features_synth.shape}, "
            f"logits {logits_real.shape} vs {logits_synth.shape}"
        )
    l_mse = fn.mse(x_synth, x_sensor)
    l_activity = (
        fn.weighted_cross_entropy(logits_real, targets, weights.class_weights)
        + fn.weighted_cross_entropy(logits_synth, targets, weights.class_weights)
    )
    total = l_mse + l_activity * weights.alpha
    similarity = 0.0
    if include_similarity:
        l_similarity = (1.0 - fn.cosine_sim(features_real, features_synth)).mean()
        total = total + l_similarity * weights.beta
        similarity = l_similarity.item()
    return CompoundLoss(total, l_mse.item(), l_activity.item(), similarity)


@dataclass
class EarlyStopState:
    """Best score so far, its epoch and parameter snapshot."""

    patience: int
    mode: Literal["max", "min"] = "max"
    best_score: Optional[float] = None
    best_epoch: int = 0
    since_improvement: int = 0
    snapshot: Optional[Dict[str, np.ndarray]] = field(default=None, repr=False)


def early_stop_update(
    state: EarlyStopState,
    score: float,
    epoch: int,
    capture: Optional[Callable[[], Dict[str, np.ndarray]]] = None,
) -> Decision:
    """
    Record one epoch's validation score. Only a strict improvement resets
    the counter and takes a snapshot.
    """
    improved = state.best_score is None or (
        score > state.best_score if state.mode == "max" else score < state.best_score
    )
    if improved:
        state.best_score = float(score)
        state.best_epoch = epoch
        state.since_improvement = 0
        if capture is not None:
            state.snapshot = capture()
        return "continue"
    state.since_improvement += 1
    return "stop" if state.since_improvement >= state.patience else "continue"


def bundle_spec_for(config: TrainConfig, splits: DataSplits, with_regressor: bool) -> BundleSpec:
    _, _, n_joints, window = splits.train.pose.shape
    regressor = None
    if with_regressor:
        regressor = RegressorSpec(
            window=window,
            n_joints=n_joints,
            variant=config.variant,
            residual=config.residual,
            leaky_slope=config.leaky_slope,
        )
    return BundleSpec(
        regressor=regressor,
        features=FeatureExtractorSpec(window=window, leaky_slope=config.leaky_slope),
        n_classes=splits.n_classes,
        dtype=config.dtype,
    )


class SeedTrainer:
    """
    Runs one method for one seed.

    Random streams are keyed by purpose (init, dropout, shuffle) so runs
    that share a seed also share every draw that their objectives share.
    """

    def __init__(self, splits: DataSplits, config: TrainConfig, seed: int):
        self.splits = splits
        self.config = config
        self.seed = seed
        self.dtype = np.dtype(config.dtype)
        self.weights = LossWeights(
            config.alpha,
            config.beta,
            class_weights_for(splits.train.labels, splits.n_classes, config.class_weighting),
        )
        self.bundle = build_bundle(
            bundle_spec_for(config, splits, with_regressor=config.method != "baseline-real"), seed
        )
        self.rng = Rng(seed)

    def _tensor(self, array: np.ndarray) -> Tensor:
        return Tensor(array, dtype=self.dtype)

    def _fit(
        self,
        step: Callable[[np.ndarray], CompoundLoss],
        validate: Callable[[], Dict[str, float]],
        mode: Literal["max", "min"],
        shuffle: Rng,
        stage: str,
    ) -> Tuple[List[EpochRecord], EarlyStopState, int]:
        """Epoch loop shared by every stage; returns (history, early-stop state, last epoch)."""
        config = self.config
        state = EarlyStopState(config.patience, mode)
        history: List[EpochRecord] = []
        n = len(self.splits.train)
        epoch = 0
        for epoch in range(1, config.max_epochs + 1):
            order = shuffle.permutation(n)
            totals = np.zeros(4)
            batches = 0
            for start in range(0, n, config.batch_size):
                loss = step(order[start:start + config.batch_size])
                value = loss.total.item()
                if not np.isfinite(value):
                    raise DivergenceError(
                        f"{stage}: non-finite loss at epoch {epoch} (seed {self.seed})"
                    )
                totals += (value, loss.mse, loss.activity, loss.similarity)
                batches += 1
            means = totals / batches
            record = EpochRecord(epoch, *means.tolist(), **validate())
            history.append(record)
            score = record.val_f1 if mode == "max" else record.val_mse
            decision = early_stop_update(state, score, epoch, self.bundle.snapshot)
            logger.debug(
                "%s seed %d epoch %d: loss %.5f val_f1 %s val_mse %s",
                stage, self.seed, epoch, record.loss, record.val_f1, record.val_mse,
            )
            if decision == "stop":
                break
        self.bundle.restore(state.snapshot)
        logger.info("%s seed %d: best epoch %d of %d", stage, self.seed, state.best_epoch, epoch)
        return history, state, epoch

    def _validate_classifier(self) -> Dict[str, float]:
        f1, _, _ = evaluate_classifier(self.bundle, self.splits.val)
        return {"val_f1": f1}

    def _validate_joint(self) -> Dict[str, float]:
        scores = self._validate_classifier()
        scores["val_mse"] = test_mse(self.bundle.regressor, self.splits.val)
        return scores

    def _validate_regressor(self) -> Dict[str, float]:
        return {"val_mse": test_mse(self.bundle.regressor, self.splits.val)}

    def _result(self, history, state, stopped, regression_history=None) -> SeedResult:
        f1, acc, cm = evaluate_classifier(self.bundle, self.splits.test)
        mse = None
        if self.bundle.regressor is not None:
            mse = test_mse(self.bundle.regressor, self.splits.test)
        return SeedResult(
            method=self.config.method,
            seed=self.seed,
            f1=f1,
            accuracy=acc,
            test_mse=mse,
            stopped_epoch=stopped,
            best_epoch=state.best_epoch,
            history=history,
            regression_history=regression_history or [],
            confusion=cm.counts,
        )

    def train_joint(self) -> SeedResult:
        bundle, train = self.bundle, self.splits.train
        optimizer = Adam(bundle.named_parameters(), lr=self.config.lr)

        def step(indices: np.ndarray) -> CompoundLoss:
            bundle.train()
            optimizer.zero_grad()
            x_pose, x_sensor = self._tensor(train.pose[indices]), self._tensor(train.sensor[indices])
            x_synth = bundle.regressor(x_pose)
            features_real = bundle.feature_extractor(x_sensor)
            features_synth = bundle.feature_extractor(x_synth)
            loss = loss_final(
                x_sensor, x_synth, features_real, features_synth,
                bundle.classifier(features_real), bundle.classifier(features_synth),
                train.labels[indices], self.weights,
            )
            loss.total.backward()
            optimizer.step()
            return loss

        history, state, stopped = self._fit(step, self._validate_joint, "max", self.rng.spawn("shuffle"), "joint")
        return self._result(history, state, stopped)

    def train_baseline_real(self) -> SeedResult:
        bundle, train = self.bundle, self.splits.train
        optimizer = Adam(bundle.named_parameters(), lr=self.config.lr)

        def step(indices: np.ndarray) -> CompoundLoss:
            bundle.train()
            optimizer.zero_grad()
            logits = bundle.classifier(bundle.feature_extractor(self._tensor(train.sensor[indices])))
            total = fn.weighted_cross_entropy(logits, train.labels[indices], self.weights.class_weights)
            total.backward()
            optimizer.step()
            return CompoundLoss(total, activity=total.item())

        history, state, stopped = self._fit(
            step, self._validate_classifier, "max", self.rng.spawn("shuffle"), "baseline-real"
        )
        return self._result(history, state, stopped)

    def train_regression_stage(self) -> Tuple[List[EpochRecord], EarlyStopState, int]:
        """Stage 1 of the two-step method: R alone on MSE, early-stopped on validation MSE."""
        bundle, train = self.bundle, self.splits.train
        regressor = bundle.regressor
        optimizer = Adam(
            [(f"regressor.{name}", p) for name, p in regressor.named_parameters()], lr=self.config.lr
        )

        def step(indices: np.ndarray) -> CompoundLoss:
            regressor.train()
            optimizer.zero_grad()
            total = fn.mse(regressor(self._tensor(train.pose[indices])), self._tensor(train.sensor[indices]))
            total.backward()
            optimizer.step()
            return CompoundLoss(total, mse=total.item())

        return self._fit(step, self._validate_regressor, "min", self.rng.spawn("shuffle"), "regression")

    def train_regression_first(self) -> SeedResult:
        regression_history, _, _ = self.train_regression_stage()

        bundle, train = self.bundle, self.splits.train
        synthetic = synthesize(bundle.regressor, train)
        names = ("feature_extractor", "classifier")
        optimizer = Adam([(name, p) for name, p in bundle.named_parameters() if name.startswith(names)],
                         lr=self.config.lr)

        def step(indices: np.ndarray) -> CompoundLoss:
            bundle.feature_extractor.train()
            optimizer.zero_grad()
            paired = np.concatenate([train.sensor[indices], synthetic[indices]])
            targets = np.concatenate([train.labels[indices], train.labels[indices]])
            logits = bundle.classifier(bundle.feature_extractor(self._tensor(paired)))
            total = fn.weighted_cross_entropy(logits, targets, self.weights.class_weights)
            total.backward()
            optimizer.step()
            return CompoundLoss(total, activity=total.item())

        history, state, stopped = self._fit(
            step, self._validate_classifier, "max", self.rng.spawn("shuffle/classifier"), "classifier"
        )
        return self._result(history, state, stopped, regression_history)

    def run(self) -> SeedResult:
        method = self.config.method
        if method == "joint":
            return self.train_joint()
        if method == "baseline-real":
            return self.train_baseline_real()
        return self.train_regression_first()


def checkpoint_name(method: str, seed: int) -> str:
    return f"checkpoint_{method}_seed{seed}.p2s"


def run_seed(
    splits: DataSplits,
    config: TrainConfig,
    seed: int,
    checkpoint_dir: Optional[Path] = None,
) -> SeedResult:
    """Train one seed and optionally write its best-epoch checkpoint."""
    trainer = SeedTrainer(splits, config, seed)
    result = trainer.run()
    if checkpoint_dir is not None:
        write_checkpoint(
            trainer.bundle,
            Path(checkpoint_dir) / checkpoint_name(config.method, seed),
            metadata={
                "method": config.method,
                "seed": seed,
                "best_epoch": result.best_epoch,
                "class_names": splits.class_names,
                "norm_mean": splits.norm.mean.tolist(),
                "norm_std": splits.norm.std.tolist(),
                "rate_hz": splits.rate_hz,
            },
        )
    logger.info(
        "%s seed %d: f1 %.4f accuracy %.4f%s",
        config.method, seed, result.f1, result.accuracy,
        "" if result.test_mse is None else f" test_mse {result.test_mse:.4f}",
    )
    return result


def run_multi_seed(
    splits: DataSplits,
    config: TrainConfig,
    parallel: int = 1,
    checkpoint_dir: Optional[Path] = None,
) -> RunResult:
    """
    Run every configured seed; results are ordered by seed whatever the
    completion order.

    Args:
        splits: Shared window sets
        config: Resolved training config
        parallel: Worker processes (1 runs in-process)
        checkpoint_dir: Where per-seed checkpoints go, if anywhere

    Returns:
        RunResult over exactly config.seeds

    Raises:
        SeedRunError: naming the first failing seed
    """
    results = []
    if parallel <= 1:
        for seed in config.seeds:
            try:
                results.append(run_seed(splits, config, seed, checkpoint_dir))
            except Exception as e:
                raise SeedRunError(seed, e) from e
    else:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            futures = {seed: pool.submit(run_seed, splits, config, seed, checkpoint_dir) for seed in config.seeds}
            for seed, future in sorted(futures.items()):
                try:
                    results.append(future.result())
                except Exception as e:
                    raise SeedRunError(seed, e) from e
    return RunResult(config.method, results)
