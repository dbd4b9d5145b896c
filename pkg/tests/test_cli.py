import json
import logging
from pathlib import Path

import pandas as pd
import pytest

from cli.config import apply_overrides, dump_experiment_config, load_experiment_config
from cli.main import main
from softsensor.exceptions import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
SYNTHETIC = str(CONFIGS / "synthetic.ini")


def error_line(stderr: str) -> str:
    lines = [line for line in stderr.splitlines() if line.startswith("error kind=")]
    assert len(lines) == 1
    return lines[0]


@pytest.fixture
def trained(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", SYNTHETIC, "--epochs", "2", "--out", str(out)]) == 0
    return out


def test_train_on_bundled_config(capsys, trained):
    for name in ("checkpoint.npz", "metrics.csv", "summary.csv", "config.ini"):
        assert (trained / name).exists()
    assert len(pd.read_csv(trained / "metrics.csv")) == 2
    assert "[experiment]" in capsys.readouterr().out


def test_resolved_config_reproduces_the_run(trained, tmp_path):
    resolved = load_experiment_config(trained / "config.ini")
    expected = apply_overrides(load_experiment_config(SYNTHETIC), epochs=2, out=str(trained))
    assert resolved == expected

    again = tmp_path / "again"
    assert main(["train", "--config", str(trained / "config.ini"), "--out", str(again)]) == 0
    assert (trained / "metrics.csv").read_text() == (again / "metrics.csv").read_text()


def test_evaluate_missing_checkpoint(tmp_path, capsys):
    missing = tmp_path / "nothing.npz"
    assert main(["evaluate", "--checkpoint", str(missing)]) == 2
    line = error_line(capsys.readouterr().err)
    assert line.startswith("error kind=FileNotFoundError message=")
    assert str(missing) in json.loads(line.split("message=", 1)[1])


def test_evaluate_prints_rmse(trained, capsys):
    assert main(["evaluate", "--checkpoint", str(trained / "checkpoint.npz"), "--split", "validation"]) == 0
    assert "split=validation rmse=" in capsys.readouterr().out


def test_corrupt_checkpoint_is_a_runtime_failure(tmp_path, capsys):
    path = tmp_path / "bad.npz"
    path.write_bytes(b"not a checkpoint")
    assert main(["evaluate", "--checkpoint", str(path)]) == 1
    assert error_line(capsys.readouterr().err).startswith("error kind=CheckpointError")


def test_failure_traceback_is_debug_only(tmp_path, caplog):
    path = tmp_path / "bad.npz"
    path.write_bytes(b"not a checkpoint")
    caplog.set_level(logging.DEBUG, logger="cli.handler")
    assert main(["evaluate", "--checkpoint", str(path)]) == 1
    records = [record for record in caplog.records if record.name == "cli.handler"]
    errors = [record for record in records if record.levelno == logging.ERROR]
    assert len(errors) == 1
    assert errors[0].exc_info is None
    assert any(record.levelno == logging.DEBUG and record.exc_info for record in records)


def test_unknown_flag(capsys):
    assert main(["train", "--config", SYNTHETIC, "--learning-rate", "3"]) == 2
    assert error_line(capsys.readouterr().err).startswith("error kind=ConfigError")


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[optimizer]\nmomentum = 0.9\n")
    assert main(["train", "--config", str(path)]) == 2
    assert "momentum" in error_line(capsys.readouterr().err)


def test_unknown_config_section(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[scheduler]\nkind = cosine\n")
    with pytest.raises(ConfigError, match="scheduler"):
        load_experiment_config(path)


def test_invalid_config_value(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[experiment]\nseed = many\n")
    with pytest.raises(ConfigError, match="seed"):
        load_experiment_config(path)


def test_overrides_win_over_file_values():
    config = apply_overrides(load_experiment_config(SYNTHETIC), seed=7, fraction=0.25, epochs=3, model="fcnn")
    assert (config.seed, config.fraction, config.epochs, config.model) == (7, 0.25, 3, "fcnn")
    assert config.schedule.warmup_epochs == 0


def test_dumped_config_loads_back_equal(tmp_path):
    config = apply_overrides(load_experiment_config(CONFIGS / "sru.ini"), seed=3)
    assert load_experiment_config(dump_experiment_config(config, tmp_path / "config.ini")) == config


def test_bundled_benchmark_configs_load():
    debutanizer = load_experiment_config(CONFIGS / "debutanizer.ini")
    sru = load_experiment_config(CONFIGS / "sru.ini")
    assert (debutanizer.epochs, debutanizer.batch_size, debutanizer.schedule.warmup_epochs) == (300, 200, 60)
    assert (sru.dataset.train_rows, sru.dataset.val_rows, sru.dataset.test_rows) == (6000, 2000, 2071)


def test_sweep_over_the_benchmark_fractions(tmp_path, capsys):
    out = tmp_path / "sweep"
    assert main(["sweep", "--config", SYNTHETIC, "--epochs", "1", "--out", str(out)]) == 0
    table = pd.read_csv(out / "sweep_table.csv", index_col=0)
    assert list(table.columns) == ["1%", "2%", "5%", "10%", "14.2%", "20%", "25%", "33.3%", "50%", "100%"]
    assert list(table.index) == ["SSVAER"]
    assert (out / "sweep_points.csv").exists()


def test_sweep_rejects_bad_fraction_list(capsys):
    assert main(["sweep", "--config", SYNTHETIC, "--fractions", "0.5,abc"]) == 2


def test_predict_writes_interval_trace(trained):
    assert main(["predict", "--checkpoint", str(trained / "checkpoint.npz")]) == 0
    trace = pd.read_csv(trained / "ci_test_95.csv")
    assert list(trace.columns) == ["index", "truth", "prediction", "lower", "upper"]


def test_export_latent(trained, tmp_path):
    out = tmp_path / "latent"
    assert main(["export-latent", "--checkpoint", str(trained / "checkpoint.npz"), "--out", str(out)]) == 0
    latent = pd.read_csv(out / "latent_test.csv")
    assert list(latent.columns) == ["z1", "z2", "z3", "z4", "z5", "z6", "y_std", "y"]


def test_export_latent_of_fcnn_is_a_config_error(tmp_path, capsys):
    out = tmp_path / "fcnn"
    assert main(["train", "--config", SYNTHETIC, "--epochs", "1", "--model", "fcnn", "--out", str(out)]) == 0
    assert main(["export-latent", "--checkpoint", str(out / "checkpoint.npz")]) == 2
    assert error_line(capsys.readouterr().err).startswith("error kind=ConfigError")


def test_inspect_data(tmp_path, capsys):
    assert main(["inspect-data", "--config", SYNTHETIC, "--out", str(tmp_path)]) == 0
    output = capsys.readouterr().out
    assert "lagged width: 8" in output
    assert "split: train 179, validation 59, test 61" in output
    assert (tmp_path / "data_summary.csv").exists()


def test_invalid_worker_count_is_a_config_error(monkeypatch, capsys):
    monkeypatch.setenv("SOFTSENSOR_SWEEP_WORKERS", "zero")
    assert main(["inspect-data", "--config", SYNTHETIC]) == 2
    assert "SOFTSENSOR_SWEEP_WORKERS" in error_line(capsys.readouterr().err)
