"""
Experiment Config

Flat UTF-8 `key = value` files:

    # comment
    method = joint
    dataset.kind = synthetic
    loss.beta = 0
    train.seeds = 1, 2, 3

Dotted keys map onto the sections below. Unknown and duplicate keys are
errors; profile defaults from the ambient settings fill in epochs,
patience, seeds and batch size that the file leaves out.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from core.errors import ConfigError
from core.settings import Settings


Method = Literal["joint", "baseline-real", "regression-first"]
METHODS = ("joint", "baseline-real", "regression-first")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSection(_Section):
    kind: Literal["synthetic", "interchange", "mmfit"]
    path: Optional[str] = None
    descriptor: Optional[str] = None
    n_classes: Optional[int] = Field(default=None, ge=2)


class WindowSection(_Section):
    size_s: float = Field(default=3.0, gt=0)
    stride_s: float = Field(default=0.2, gt=0)
    rate_hz: Optional[float] = Field(default=None, gt=0)


class PreprocessSection(_Section):
    order: Literal["resample-first", "normalize-first"] = "resample-first"


class LossSection(_Section):
    alpha: float = Field(default=1.0, ge=0)
    beta: float = Field(default=0.0, ge=0)
    class_weights: Literal["inverse-frequency", "uniform"] = "inverse-frequency"


class TrainSection(_Section):
    lr: float = Field(default=1e-3, gt=0)
    batch_size: Optional[int] = Field(default=None, gt=0)
    max_epochs: Optional[int] = Field(default=None, gt=0)
    patience: Optional[int] = Field(default=None, gt=0)
    seeds: Optional[List[int]] = None
    profile: Optional[str] = None
    dtype: Literal["float32", "float64"] = "float32"

    @field_validator("seeds", mode="before")
    @classmethod
    def _split_seeds(cls, value):
        if isinstance(value, str):
            return [part.strip() for part in value.split(",") if part.strip()]
        return value

    @field_validator("seeds")
    @classmethod
    def _non_empty(cls, value):
        if value is not None and not value:
            raise ValueError("at least one seed is required")
        return value


class ModelSection(_Section):
    variant: Optional[Literal["full", "no-block-5"]] = None
    leaky_slope: float = Field(default=0.01, ge=0, lt=1)
    residual: bool = True


class SynthSection(_Section):
    seed: int = 0
    n_classes: Optional[int] = Field(default=None, ge=2)
    train_windows: Optional[int] = Field(default=None, gt=0)
    val_windows: Optional[int] = Field(default=None, gt=0)
    test_windows: Optional[int] = Field(default=None, gt=0)
    noise_std: Optional[float] = Field(default=None, ge=0)


class TrainConfig(BaseModel):
    """Resolved training parameters for one experiment."""

    model_config = ConfigDict(frozen=True)

    method: Method
    lr: float
    max_epochs: int
    patience: int
    batch_size: int
    seeds: List[int] = Field(min_length=1)
    alpha: float = Field(ge=0)
    beta: float = Field(ge=0)
    class_weighting: Literal["inverse-frequency", "uniform"]
    variant: Literal["full", "no-block-5"]
    leaky_slope: float
    residual: bool
    dtype: Literal["float32", "float64"]

    @model_validator(mode="after")
    def _patience_below_epochs(self) -> "TrainConfig":
        if self.patience >= self.max_epochs:
            raise ValueError(f"patience ({self.patience}) must be below max_epochs ({self.max_epochs})")
        return self


class ExperimentConfig(_Section):
    method: Method = "joint"
    dataset: DatasetSection
    window: WindowSection = Field(default_factory=WindowSection)
    preprocess: PreprocessSection = Field(default_factory=PreprocessSection)
    loss: LossSection = Field(default_factory=LossSection)
    train: TrainSection = Field(default_factory=TrainSection)
    model: ModelSection = Field(default_factory=ModelSection)
    synth: SynthSection = Field(default_factory=SynthSection)

    def with_overrides(self, seed: Optional[int] = None, method: Optional[str] = None) -> "ExperimentConfig":
        """Apply command-line overrides (--seed replaces the seed list)."""
        config = self
        if method is not None:
            if method not in METHODS:
                raise ConfigError(f"unknown method '{method}' (expected one of {', '.join(METHODS)})")
            config = config.model_copy(update={"method": method})
        if seed is not None:
            config = config.model_copy(update={"train": config.train.model_copy(update={"seeds": [seed]})})
        return config

    def default_profile(self, segmented: bool = False) -> str:
        if self.train.profile:
            return self.train.profile
        if self.dataset.kind == "synthetic":
            return "desk"
        return "segmented" if segmented else "mmfit"

    def resolve(self, settings: Settings, segmented: bool = False) -> TrainConfig:
        """
        Merge profile defaults into a TrainConfig.

        Args:
            settings: Ambient settings holding the named profiles
            segmented: Dataset is made of one-label clips

        Returns:
            Validated TrainConfig
        """
        profile = settings.profile(self.default_profile(segmented))
        train = self.train
        values = {
            "method": self.method,
            "lr": train.lr,
            "max_epochs": train.max_epochs or profile.max_epochs,
            "patience": train.patience or profile.patience,
            "batch_size": train.batch_size or profile.batch_size,
            "seeds": train.seeds or profile.seeds,
            "alpha": self.loss.alpha,
            "beta": self.loss.beta,
            "class_weighting": self.loss.class_weights,
            "variant": self.model.variant or ("no-block-5" if segmented else "full"),
            "leaky_slope": self.model.leaky_slope,
            "residual": self.model.residual,
            "dtype": train.dtype,
        }
        try:
            return TrainConfig(**values)
        except ValidationError as e:
            raise ConfigError(_describe_validation(e))


def known_keys() -> List[str]:
    keys = []
    for name, field in ExperimentConfig.model_fields.items():
        annotation = field.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            keys.extend(f"{name}.{sub}" for sub in annotation.model_fields)
        else:
            keys.append(name)
    return keys


def _describe_validation(error: ValidationError) -> str:
    first = error.errors()[0]
    key = ".".join(str(part) for part in first["loc"] if not isinstance(part, int)) or "config"
    return f"{key}: {first['msg']}"


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """
    Parse config text.

    Args:
        text: File contents
        source: Name used in error messages

    Returns:
        Validated ExperimentConfig
    """
    allowed = set(known_keys())
    nested: Dict[str, Any] = {}
    seen = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got '{line}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"{source}:{line_no}: unknown key '{key}'")
        if key in seen:
            raise ConfigError(f"{source}:{line_no}: duplicate key '{key}'")
        if not value:
            raise ConfigError(f"{source}:{line_no}: empty value for '{key}'")
        seen.add(key)
        section, _, field = key.partition(".")
        if field:
            nested.setdefault(section, {})[field] = value
        else:
            nested[section] = value

    if "dataset" not in nested or "kind" not in nested["dataset"]:
        raise ConfigError(f"{source}: missing required key 'dataset.kind'")
    try:
        return ExperimentConfig.model_validate(nested)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_describe_validation(e)}")


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path}: not UTF-8 text ({e})")
    return parse_config(text, str(path))
