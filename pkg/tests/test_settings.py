import logging

import pytest

from core.errors import ConfigError
from core.logging_config import configure_logging
from core.settings import Settings, load_settings


def test_shipped_defaults():
    settings = Settings()
    assert settings.logging.level == "INFO"
    assert settings.profile("desk").max_epochs == 40
    assert settings.profile("segmented").seeds == list(range(1, 11))
    assert settings.synth.n_classes == 4


def test_environment_overrides_yaml(monkeypatch):
    monkeypatch.setenv("SKEL2SENSE_LOGGING__LEVEL", "DEBUG")
    monkeypatch.setenv("SKEL2SENSE_SYNTH__NOISE_STD", "0.2")
    settings = Settings()
    assert settings.logging.level == "DEBUG"
    assert settings.synth.noise_std == 0.2


def test_constructor_wins():
    assert Settings(synth={"n_classes": 3}).synth.n_classes == 3


def test_alternative_file(tmp_path):
    path = tmp_path / "settings.yaml"
    path.write_text("profiles:\n  quick:\n    max_epochs: 5\n    patience: 2\n    seeds: [4]\n")
    settings = load_settings(str(path))
    assert settings.profile("quick").seeds == [4]
    with pytest.raises(ConfigError, match="desk"):
        settings.profile("desk")


def test_unknown_profile_lists_known():
    with pytest.raises(ConfigError, match="desk, mmfit, segmented"):
        Settings().profile("nightly")


def test_logging_file(tmp_path):
    root = logging.getLogger()
    saved = list(root.handlers), root.level
    try:
        log_path = tmp_path / "logs" / "run.log"
        configure_logging(Settings(logging={"level": "debug", "file": str(log_path)}))
        assert root.level == logging.DEBUG
        logging.getLogger("core.training").debug("epoch 1 done")
        for handler in root.handlers:
            handler.flush()
        assert "epoch 1 done" in log_path.read_text(encoding="utf-8")
    finally:
        for handler in list(root.handlers):
            root.removeHandler(handler)
            handler.close()
        for handler in saved[0]:
            root.addHandler(handler)
        root.setLevel(saved[1])
