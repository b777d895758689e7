"""
Models

Pose-to-sensor regressor R (dilated causal 2D TCN blocks over
[coords, joints, time]), the convolutional feature extractor F and the
linear activity classifier C, plus the bundle that owns all three.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.engine import functional as fn
from core.engine.layers import BatchNorm1d, Conv1d, Conv2d, Dropout, Linear, MaxPool1d, Module
from core.engine.rng import Rng
from core.engine.tensor import Parameter, Tensor
from core.errors import ShapeError


logger = logging.getLogger(__name__)

# Layers without a following nonlinearity are initialized with unit gain
LINEAR_GAIN_SLOPE = 1.0


class TCNBlockSpec(BaseModel):
    """(in_ch, out_ch, kernel, dilation, dropout)"""

    model_config = ConfigDict(frozen=True)

    in_ch: int = Field(gt=0)
    out_ch: int = Field(gt=0)
    kernel: int = Field(ge=1)
    dilation: int = Field(ge=1)
    dropout: float = Field(ge=0.0, lt=1.0)

    @classmethod
    def row(cls, in_ch: int, out_ch: int, kernel: int, dilation: int, dropout: float) -> "TCNBlockSpec":
        return cls(in_ch=in_ch, out_ch=out_ch, kernel=kernel, dilation=dilation, dropout=dropout)


DEFAULT_BLOCKS = (
    TCNBlockSpec.row(3, 32, 3, 1, 0.0),
    TCNBlockSpec.row(32, 32, 3, 2, 0.2),
    TCNBlockSpec.row(32, 32, 3, 4, 0.2),
    TCNBlockSpec.row(32, 32, 3, 1, 0.2),
    TCNBlockSpec.row(16, 16, 1, 1, 0.1),
)


class RegressorSpec(BaseModel):
    """
    Regressor layout. `mixer_widths[i]` is the output width of the pointwise
    linear following block i+1; the last block feeds the fully-connected head.
    """

    model_config = ConfigDict(frozen=True)

    blocks: Tuple[TCNBlockSpec, ...] = DEFAULT_BLOCKS
    mixer_widths: Tuple[int, ...] = (32, 32, 32, 16)
    window: int = Field(default=300, gt=0)
    n_joints: int = Field(default=3, gt=0)
    variant: Literal["full", "no-block-5"] = "full"
    residual: bool = True
    leaky_slope: float = Field(default=0.01, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_widths(self) -> "RegressorSpec":
        if len(self.mixer_widths) != len(self.blocks) - 1:
            raise ValueError("one mixer width is needed after every block but the last")
        if self.blocks[0].in_ch != 3:
            raise ValueError("the first block must take the 3 coordinate channels")
        for index, width in enumerate(self.mixer_widths):
            if self.blocks[index + 1].in_ch != width:
                raise ValueError(
                    f"block {index + 2} expects {self.blocks[index + 1].in_ch} channels "
                    f"but the preceding linear produces {width}"
                )
        return self

    @property
    def active_blocks(self) -> Tuple[TCNBlockSpec, ...]:
        if self.variant == "no-block-5":
            return self.blocks[:-1]
        return self.blocks

    @property
    def head_channels(self) -> int:
        if self.variant == "no-block-5":
            return self.mixer_widths[-1]
        return self.blocks[-1].out_ch


class FeatureExtractorSpec(BaseModel):
    """Three strided 1D convolutions, one max-pool, a 100-wide projection."""

    model_config = ConfigDict(frozen=True)

    in_ch: int = 3
    channels: Tuple[int, ...] = (9, 9, 9)
    kernel: int = Field(default=9, ge=1)
    stride: int = Field(default=4, ge=1)
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0)
    pool_kernel: int = 2
    pool_stride: int = 2
    feature_width: int = 100
    window: int = Field(default=300, gt=0)
    leaky_slope: float = Field(default=0.01, ge=0.0, lt=1.0)
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    @model_validator(mode="after")
    def _check_stride(self) -> "FeatureExtractorSpec":
        if self.stride != self.kernel // 2:
            raise ValueError(f"stride must equal kernel // 2 ({self.kernel // 2}), got {self.stride}")
        return self

    def time_extents(self) -> List[int]:
        """Time length at the input, after each convolution and after pooling."""
        extents = [self.window]
        for _ in self.channels:
            length = extents[-1]
            if length < self.kernel:
                raise ShapeError(f"window {self.window} is too short for the feature extractor convolutions")
            extents.append((length - self.kernel) // self.stride + 1)
        if extents[-1] < self.pool_kernel:
            raise ShapeError(f"window {self.window} is too short for the feature extractor pooling")
        extents.append((extents[-1] - self.pool_kernel) // self.pool_stride + 1)
        return extents

    @property
    def flat_width(self) -> int:
        return self.channels[-1] * self.time_extents()[-1]


class BundleSpec(BaseModel):
    """Everything needed to rebuild a ModelBundle (stored in checkpoints)."""

    regressor: Optional[RegressorSpec] = None
    features: FeatureExtractorSpec = Field(default_factory=FeatureExtractorSpec)
    n_classes: int = Field(gt=1)
    dtype: Literal["float32", "float64"] = "float32"


class TCNBlock(Module):
    """
    Two dilated 2D convolutions over (joints, time), each followed by leaky
    ReLU and dropout, plus a residual path. Time padding is causal (left
    only); joint padding is symmetric so both extents are preserved.
    """

    def __init__(
        self,
        spec: TCNBlockSpec,
        init_rng: Rng,
        dropout_rng: Rng,
        slope: float = 0.01,
        residual: bool = True,
        dtype=np.float32,
    ):
        super().__init__()
        self.spec = spec
        self.slope = slope
        k, d = spec.kernel, spec.dilation
        self._pads = ((k - 1) // 2, k // 2, (k - 1) * d, 0)

        self.conv1 = Conv2d(spec.in_ch, spec.out_ch, (k, k), init_rng.spawn("conv1"),
                            dilation=(1, d), slope=slope, dtype=dtype)
        self.drop1 = Dropout(spec.dropout, dropout_rng.spawn("drop1")) if spec.dropout > 0 else None
        self.conv2 = Conv2d(spec.out_ch, spec.out_ch, (k, k), init_rng.spawn("conv2"),
                            dilation=(1, d), slope=slope, dtype=dtype)
        self.drop2 = Dropout(spec.dropout, dropout_rng.spawn("drop2")) if spec.dropout > 0 else None
        self.residual = residual
        if residual and spec.in_ch != spec.out_ch:
            self.downsample = Conv2d(spec.in_ch, spec.out_ch, (1, 1), init_rng.spawn("downsample"),
                                     slope=LINEAR_GAIN_SLOPE, dtype=dtype)
        else:
            self.downsample = None

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.spec.in_ch:
            raise ShapeError(f"TCN block expects [b, {self.spec.in_ch}, J, T], got {x.shape}")
        h = self.conv1(fn.pad2d(x, self._pads))
        h = fn.leaky_relu(h, self.slope)
        if self.drop1 is not None:
            h = self.drop1(h)
        h = fn.leaky_relu(self.conv2(fn.pad2d(h, self._pads)), self.slope)
        if self.drop2 is not None:
            h = self.drop2(h)
        if self.residual:
            h = h + (x if self.downsample is None else self.downsample(x))
        return h


class Regressor(Module):
    """R: [b, 3 coords, J joints, T] poses to [b, 3, T] acceleration."""

    def __init__(self, spec: RegressorSpec, init_rng: Rng, dropout_rng: Rng, dtype=np.float32):
        super().__init__()
        self.spec = spec
        self._blocks: List[TCNBlock] = []
        self._mixers: List[Conv2d] = []
        for index, block_spec in enumerate(spec.active_blocks, start=1):
            block = TCNBlock(block_spec, init_rng.spawn(f"block{index}"), dropout_rng.spawn(f"block{index}"),
                             spec.leaky_slope, spec.residual, dtype)
            setattr(self, f"block{index}", block)
            self._blocks.append(block)
            if index <= len(spec.mixer_widths):
                mixer = Conv2d(block_spec.out_ch, spec.mixer_widths[index - 1], (1, 1),
                               init_rng.spawn(f"linear{index}"), slope=LINEAR_GAIN_SLOPE, dtype=dtype)
                setattr(self, f"linear{index}", mixer)
                self._mixers.append(mixer)
        self.fc = Linear(spec.head_channels * spec.n_joints * spec.window, 3 * spec.window,
                         init_rng.spawn("fc"), slope=LINEAR_GAIN_SLOPE, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        expected = (3, self.spec.n_joints, self.spec.window)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ShapeError(f"regressor expects [b, {expected[0]}, {expected[1]}, {expected[2]}], got {x.shape}")
        h = x
        for index, block in enumerate(self._blocks):
            h = block(h)
            if index < len(self._mixers):
                h = self._mixers[index](h)
        out = self.fc(h.flatten())
        return out.reshape(x.shape[0], 3, self.spec.window)


class FeatureExtractor(Module):
    """F: [b, 3, T] acceleration to [b, feature_width] features."""

    def __init__(self, spec: FeatureExtractorSpec, init_rng: Rng, dropout_rng: Rng, dtype=np.float32):
        super().__init__()
        self.spec = spec
        spec.time_extents()
        in_ch = spec.in_ch
        self._stages = []
        for index, out_ch in enumerate(spec.channels, start=1):
            conv = Conv1d(in_ch, out_ch, spec.kernel, init_rng.spawn(f"conv{index}"),
                          stride=spec.stride, slope=spec.leaky_slope, dtype=dtype)
            norm = BatchNorm1d(out_ch, spec.bn_momentum, spec.bn_eps, dtype=dtype)
            drop = Dropout(spec.dropout, dropout_rng.spawn(f"drop{index}"))
            setattr(self, f"conv{index}", conv)
            setattr(self, f"bn{index}", norm)
            setattr(self, f"drop{index}", drop)
            self._stages.append((conv, norm, drop))
            in_ch = out_ch
        self.pool = MaxPool1d(spec.pool_kernel, spec.pool_stride)
        self.fc = Linear(spec.flat_width, spec.feature_width, init_rng.spawn("fc"),
                         slope=LINEAR_GAIN_SLOPE, dtype=dtype)

    def stages(self, x: Tensor) -> Iterator[Tuple[str, Tensor]]:
        """Intermediate activations in layer order."""
        if x.ndim != 3 or x.shape[1] != self.spec.in_ch:
            raise ShapeError(f"feature extractor expects [b, {self.spec.in_ch}, T], got {x.shape}")
        h = x
        yield "input", h
        for index, (conv, norm, drop) in enumerate(self._stages, start=1):
            h = drop(norm(fn.leaky_relu(conv(h), self.spec.leaky_slope)))
            yield f"conv{index}", h
        h = self.pool(h)
        yield "pool", h
        h = self.fc(h.flatten())
        yield "features", h

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for _, h in self.stages(x):
            pass
        return h


class Classifier(Module):
    """C: single affine layer from features to class logits."""

    def __init__(self, feature_width: int, n_classes: int, init_rng: Rng, dtype=np.float32):
        super().__init__()
        self.n_classes = n_classes
        self.fc = Linear(feature_width, n_classes, init_rng.spawn("fc"), slope=LINEAR_GAIN_SLOPE, dtype=dtype)

    def forward(self, features: Tensor) -> Tensor:
        if features.ndim != 2 or features.shape[1] != self.fc.weight.shape[1]:
            raise ShapeError(f"classifier expects [b, {self.fc.weight.shape[1]}], got {features.shape}")
        return self.fc(features)


@dataclass
class ModelBundle:
    """R (optional), F and C with their bundle-unique parameter names."""

    spec: BundleSpec
    feature_extractor: FeatureExtractor
    classifier: Classifier
    regressor: Optional[Regressor] = None

    def modules(self) -> List[Tuple[str, Module]]:
        parts = [("regressor", self.regressor)] if self.regressor is not None else []
        parts += [("feature_extractor", self.feature_extractor), ("classifier", self.classifier)]
        return parts

    def named_parameters(self) -> List[Tuple[str, Parameter]]:
        return [
            (f"{prefix}.{name}", p)
            for prefix, module in self.modules()
            for name, p in module.named_parameters()
        ]

    def named_buffers(self) -> List[Tuple[str, np.ndarray]]:
        return [
            (f"{prefix}.{name}", b)
            for prefix, module in self.modules()
            for name, b in module.named_buffers()
        ]

    def state_arrays(self) -> Dict[str, np.ndarray]:
        """Parameters then buffers, by name (live arrays, not copies)."""
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(self.named_buffers())
        return state

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: array.copy() for name, array in self.state_arrays().items()}

    def restore(self, snapshot: Dict[str, np.ndarray]) -> None:
        for name, array in self.state_arrays().items():
            array[...] = snapshot[name]

    def train(self, mode: bool = True) -> "ModelBundle":
        for _, module in self.modules():
            module.train(mode)
        return self

    def eval(self) -> "ModelBundle":
        return self.train(False)

    def zero_grad(self) -> None:
        for _, module in self.modules():
            module.zero_grad()


def build_bundle(spec: BundleSpec, seed: int) -> ModelBundle:
    """
    Initialize a bundle. Every sub-model draws from its own init and dropout
    streams, so adding or removing R never changes the draws of F and C.

    Args:
        spec: Architecture description
        seed: Experiment seed

    Returns:
        Fresh ModelBundle in train mode
    """
    dtype = np.dtype(spec.dtype)
    root = Rng(seed)
    regressor = None
    if spec.regressor is not None:
        regressor = Regressor(spec.regressor, root.spawn("init/regressor"),
                              root.spawn("dropout/regressor"), dtype)
    features = FeatureExtractor(spec.features, root.spawn("init/feature_extractor"),
                                root.spawn("dropout/feature_extractor"), dtype)
    classifier = Classifier(spec.features.feature_width, spec.n_classes,
                            root.spawn("init/classifier"), dtype)
    bundle = ModelBundle(spec, features, classifier, regressor)
    logger.debug(
        "built bundle: %d parameters%s",
        sum(p.size for _, p in bundle.named_parameters()),
        "" if regressor is None else f" ({regressor.num_parameters()} in the regressor)",
    )
    return bundle

