"""
Settings

Ambient configuration loaded from config/settings.yaml, overridable through
SKEL2SENSE_* environment variables or a .env file.
"""

from pathlib import Path
from typing import Dict, List, Optional, Tuple, Type

from dotenv import load_dotenv
from pydantic import BaseModel, Field
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    YamlConfigSettingsSource,
)

from core.errors import ConfigError


DEFAULT_SETTINGS_FILE = Path(__file__).resolve().parent.parent / "config" / "settings.yaml"


class LoggingSettings(BaseModel):
    level: str = "INFO"
    file: Optional[str] = None


class ProfileSettings(BaseModel):
    """Training defaults for one experiment profile."""

    max_epochs: int = Field(gt=0)
    patience: int = Field(gt=0)
    seeds: List[int] = Field(min_length=1)
    batch_size: int = Field(default=64, gt=0)


class SynthSettings(BaseModel):
    n_classes: int = Field(default=4, ge=2)
    train_windows: int = Field(default=100, gt=0)
    val_windows: int = Field(default=25, gt=0)
    test_windows: int = Field(default=25, gt=0)
    noise_std: float = Field(default=0.05, ge=0.0)


def _default_profiles() -> Dict[str, ProfileSettings]:
    return {
        "desk": ProfileSettings(max_epochs=40, patience=10, seeds=[1, 2, 3]),
        "mmfit": ProfileSettings(max_epochs=100, patience=25, seeds=[1, 2, 3, 4, 5]),
        "segmented": ProfileSettings(max_epochs=200, patience=30, seeds=list(range(1, 11))),
    }


class Settings(BaseSettings):
    """
    Process-wide settings.

    Precedence: constructor arguments, environment, .env, YAML file.
    """

    model_config = SettingsConfigDict(
        env_prefix="SKEL2SENSE_",
        env_nested_delimiter="__",
        env_file=".env",
        extra="ignore",
        yaml_file=str(DEFAULT_SETTINGS_FILE),
    )

    logging: LoggingSettings = Field(default_factory=LoggingSettings)
    profiles: Dict[str, ProfileSettings] = Field(default_factory=_default_profiles)
    synth: SynthSettings = Field(default_factory=SynthSettings)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        return (
            init_settings,
            env_settings,
            dotenv_settings,
            YamlConfigSettingsSource(settings_cls),
        )

    def profile(self, name: str) -> ProfileSettings:
        try:
            return self.profiles[name]
        except KeyError:
            known = ", ".join(sorted(self.profiles))
            raise ConfigError(f"unknown training profile '{name}' (known: {known})")


def load_settings(path: Optional[str] = None) -> Settings:
    """
    Load settings, optionally from a YAML file other than the default.

    Args:
        path: Alternative settings.yaml

    Returns:
        Settings instance
    """
    load_dotenv()

    if path is None:
        return Settings()

    class _FileSettings(Settings):
        model_config = SettingsConfigDict(**{**Settings.model_config, "yaml_file": str(path)})

    return _FileSettings()
