import logging
from contextlib import contextmanager

import pytest
from click.testing import CliRunner

from cli.main import cli
from core.formats.interchange import read_manifest
from core.formats.report import read_report


CLI_CONFIG = """
method = joint
dataset.kind = synthetic
synth.n_classes = 2
synth.train_windows = 3
synth.val_windows = 2
synth.test_windows = 2
train.max_epochs = 2
train.patience = 1
train.batch_size = 4
train.seeds = 1
"""


@contextmanager
def preserved_logging():
    """The CLI reconfigures the root logger; put pytest's handlers back afterwards."""
    root = logging.getLogger()
    saved = list(root.handlers), root.level
    try:
        yield
    finally:
        for handler in list(root.handlers):
            root.removeHandler(handler)
        for handler in saved[0]:
            root.addHandler(handler)
        root.setLevel(saved[1])


@pytest.fixture(autouse=True)
def restore_logging():
    with preserved_logging():
        yield


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.conf"
    path.write_text(CLI_CONFIG)
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One finished training run shared by the eval and report tests."""
    root = tmp_path_factory.mktemp("run")
    config = root / "tiny.conf"
    config.write_text(CLI_CONFIG)
    out = root / "out"
    with preserved_logging():
        result = CliRunner().invoke(cli, ["train", "--config", str(config), "--out", str(out)])
    assert result.exit_code == 0, result.output
    return config, out


def test_help_lists_commands(runner):
    result = runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    for command in ("preprocess", "synth", "train", "eval", "gradcheck", "report"):
        assert command in result.output


def test_synth_writes_interchange(runner, config_file, tmp_path):
    out = tmp_path / "data"
    result = runner.invoke(cli, ["synth", "--config", str(config_file), "--out", str(out), "--seed", "3"])
    assert result.exit_code == 0, result.output
    manifest = read_manifest(out)
    assert manifest.class_names == ["wave", "stir"]
    assert len(manifest.sessions) == 2 * (3 + 2 + 2)


def test_preprocess_fills_window_store(runner, config_file, tmp_path):
    result = runner.invoke(cli, ["preprocess", "--config", str(config_file), "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "windows" / "index.json").exists()
    assert "Window Sets" in result.output


def test_train_writes_artifacts(trained):
    _, out = trained
    rows = read_report(out / "report_joint.csv")
    assert [row["seed"] for row in rows] == ["1", "mean", "std"]
    assert (out / "history_joint_seed1.csv").exists()
    assert (out / "checkpoint_joint_seed1.p2s").exists()


def test_eval_and_dump(runner, trained):
    config, out = trained
    result = runner.invoke(cli, [
        "eval", "--config", str(config), "--checkpoint", str(out / "checkpoint_joint_seed1.p2s"),
        "--out", str(out), "--dump", "2",
    ])
    assert result.exit_code == 0, result.output
    assert "Macro-F1" in result.output
    dump = (out / "dumps" / "window_0001.csv").read_text().splitlines()
    assert dump[0] == "time_s,real_ax,real_ay,real_az,synth_ax,synth_ay,synth_az"
    assert len(dump) == 301


def test_report_summarizes(runner, trained):
    _, out = trained
    result = runner.invoke(cli, ["report", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "summary.csv").read_text(encoding="utf-8").startswith("method,seeds,f1")


def test_gradcheck_passes(runner):
    result = runner.invoke(cli, ["gradcheck", "--dtype", "float64", "--points", "2"])
    assert result.exit_code == 0, result.output
    assert "FAIL" not in result.output


def test_config_error_exit_code(runner, tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("dataset.kind = synthetic\nloss.gamma = 2\n")
    result = runner.invoke(cli, ["train", "--config", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 3
    assert "error[config]:" in result.output
    assert "loss.gamma" in result.output


def test_missing_dataset_exit_code(runner, tmp_path):
    path = tmp_path / "interchange.conf"
    path.write_text(f"dataset.kind = interchange\ndataset.path = {tmp_path / 'absent'}\n")
    result = runner.invoke(cli, ["preprocess", "--config", str(path), "--out", str(tmp_path)])
    assert result.exit_code == 4
    assert "error[data]:" in result.output


def test_report_without_runs(runner, tmp_path):
    result = runner.invoke(cli, ["report", "--out", str(tmp_path)])
    assert result.exit_code == 4
    assert "error[format]:" in result.output


def test_parallel_training_reports_by_seed(runner, tmp_path):
    config = tmp_path / "two_seeds.conf"
    config.write_text(CLI_CONFIG.replace("train.seeds = 1", "train.seeds = 2, 1").replace(
        "method = joint", "method = baseline-real"))
    out = tmp_path / "out"
    result = runner.invoke(cli, ["train", "--config", str(config), "--out", str(out), "--parallel", "2"])
    assert result.exit_code == 0, result.output
    rows = read_report(out / "report_baseline-real.csv")
    assert [row["seed"] for row in rows] == ["1", "2", "mean", "std"]


def test_unwritable_output_is_one_error_line(runner, config_file, tmp_path):
    blocker = tmp_path / "taken"
    blocker.write_text("not a directory")
    result = runner.invoke(cli, ["synth", "--config", str(config_file), "--out", str(blocker / "data")])
    assert result.exit_code == 4
    errors = [line for line in result.output.splitlines() if line.startswith("error[")]
    assert len(errors) == 1
    assert errors[0].startswith("error[data]:")
    assert not isinstance(result.exception, OSError)
