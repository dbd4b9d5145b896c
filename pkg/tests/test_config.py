import pytest

from softsensor.config import Config


def test_defaults(monkeypatch):
    for name in ("SOFTSENSOR_LOG_LEVEL", "SOFTSENSOR_DATA_DIR", "SOFTSENSOR_OUTPUT_DIR", "SOFTSENSOR_SWEEP_WORKERS"):
        monkeypatch.delenv(name, raising=False)
    config = Config()
    assert (config.log_level, config.data_dir, config.output_dir, config.sweep_workers) == ("INFO", ".", "runs", 1)


def test_singleton_until_reset(monkeypatch):
    first = Config()
    assert Config() is first
    monkeypatch.setenv("SOFTSENSOR_LOG_LEVEL", "debug")
    Config.reset()
    assert Config().log_level == "DEBUG"


@pytest.mark.parametrize("value", ["two", "0"])
def test_invalid_worker_count(monkeypatch, value):
    monkeypatch.setenv("SOFTSENSOR_SWEEP_WORKERS", value)
    with pytest.raises(ValueError, match="SOFTSENSOR_SWEEP_WORKERS"):
        Config()


def test_relative_dataset_paths_use_the_data_dir(monkeypatch, tmp_path):
    monkeypatch.setenv("SOFTSENSOR_DATA_DIR", str(tmp_path))
    (tmp_path / "table.csv").write_text("1,2\n3,4\n5,7\n")
    from softsensor.DatasetService import DatasetService, DatasetSettings
    series = DatasetService().load_series(DatasetSettings(name="generic", path="table.csv"))
    assert series.rows == 3
