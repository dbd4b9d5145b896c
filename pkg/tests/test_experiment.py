import json
import math

import numpy as np
import pytest

from softsensor.DatasetService import DatasetSettings
from softsensor.ExperimentService import (
    ExperimentService,
    ExperimentConfig,
    MetricsLog,
    confidence_bounds,
    fraction_label,
    get_experiment_service,
    load_checkpoint,
    rmse,
    save_checkpoint,
)
from softsensor.Models import SsvaerModel
from softsensor.Optimizer import LrSchedule
from softsensor.config import Config
from softsensor.exceptions import CheckpointError, ConfigError, DataError, NumericOverflowError, TrainingError


def test_two_epochs_write_metrics_and_checkpoint(tiny_config, tmp_path):
    config = tiny_config.replace(schedule=LrSchedule(warmup_epochs=1, total_epochs=2))
    result = get_experiment_service().train(config, output_dir=tmp_path / "out")
    assert len(result.metrics.rows) == 2
    for name in ("checkpoint.npz", "metrics.csv", "summary.csv"):
        assert (tmp_path / "out" / name).exists()
    assert list(result.metrics.to_frame().columns) == [
        "epoch", "lr", "train_rec", "train_kl", "train_pv", "train_label", "train_entropy",
        "train_recon_reg", "train_total", "val_total", "val_rmse", "best"]


def test_same_seed_is_bit_identical(tiny_config):
    service = get_experiment_service()
    first, second = service.train(tiny_config), service.train(tiny_config)
    assert first.metrics.to_frame().equals(second.metrics.to_frame())
    for name, values in first.checkpoint.state.items():
        assert np.array_equal(values, second.checkpoint.state[name])


def test_different_seeds_differ(tiny_config):
    service = get_experiment_service()
    first, second = service.train(tiny_config), service.train(tiny_config.replace(seed=1))
    assert not first.metrics.to_frame().equals(second.metrics.to_frame())


def test_checkpoint_is_the_best_validation_epoch(tiny_config):
    result = get_experiment_service().train(tiny_config.replace(schedule=LrSchedule(warmup_epochs=1, total_epochs=5)))
    frame = result.metrics.to_frame()
    assert result.checkpoint.epoch == int(frame["val_total"].idxmin())
    assert result.checkpoint.best_val_loss == frame["val_total"].min()
    assert result.metrics.best_epoch() == result.checkpoint.epoch


def test_rmse_selection(tiny_config):
    result = get_experiment_service().train(tiny_config.replace(select_by="rmse"))
    frame = result.metrics.to_frame()
    assert result.checkpoint.epoch == int(frame["val_rmse"].idxmin())


@pytest.mark.parametrize("kind", ["ssvaer", "svaer", "fcnn"])
def test_model_beats_the_mean_predictor(tiny_config, kind):
    config = tiny_config.replace(
        model=kind,
        dataset=DatasetSettings(name="synthetic", synthetic_rows=200, synthetic_variables=2, synthetic_seed=1),
        schedule=LrSchedule(warmup_epochs=5, total_epochs=40),
        batch_size=20,
    )
    service = get_experiment_service()
    result = service.train(config)
    _, y_test = service.split_inputs(result.checkpoint, "test")
    assert result.test_rmse < float(np.std(y_test))


def test_empty_validation_falls_back_to_training_score(tiny_config):
    config = tiny_config.replace(dataset=DatasetSettings(
        name="synthetic", synthetic_rows=60, synthetic_variables=2, train_fraction=0.8, val_fraction=0.0))
    service = get_experiment_service()
    result = service.train(config)
    frame = result.metrics.to_frame()
    assert np.array_equal(frame["val_total"].to_numpy(), frame["train_total"].to_numpy())
    with pytest.raises(DataError):
        service.evaluate_rmse(result.checkpoint, "validation")


def test_non_finite_loss_reports_epoch_and_batch(tiny_config, monkeypatch):
    def explode(self, batch, noise, weights=None):
        raise NumericOverflowError("exp: non-finite output")

    monkeypatch.setattr(SsvaerModel, "loss_terms", explode)
    with pytest.raises(TrainingError, match="epoch 0, batch 0"):
        get_experiment_service().train(tiny_config)


def test_checkpoint_round_trip_is_bitwise(tiny_config, tmp_path):
    service = get_experiment_service()
    result = service.train(tiny_config)
    path = save_checkpoint(result.checkpoint, tmp_path / "model.npz")
    loaded = load_checkpoint(path)
    assert loaded.config == tiny_config
    x, _ = service.split_inputs(loaded, "test")
    before = result.checkpoint.build_model().predict_y(result.checkpoint.standardizer.transform_x(x))
    after = loaded.build_model().predict_y(loaded.standardizer.transform_x(x))
    assert np.array_equal(before[0], after[0]) and np.array_equal(before[1], after[1])
    assert service.evaluate_rmse(loaded, "test") == service.evaluate_rmse(result.checkpoint, "test")


def test_evaluate_matches_training_report(tiny_config):
    service = get_experiment_service()
    result = service.train(tiny_config)
    assert service.evaluate_rmse(result.checkpoint, "test", batch_size=tiny_config.batch_size) == result.test_rmse


def test_evaluate_is_invariant_to_batch_size(tiny_config):
    service = get_experiment_service()
    checkpoint = service.train(tiny_config).checkpoint
    assert service.evaluate_rmse(checkpoint, "test", batch_size=3) == pytest.approx(
        service.evaluate_rmse(checkpoint, "test"), abs=1e-12)


def test_truncated_checkpoint(tiny_config, tmp_path):
    path = save_checkpoint(get_experiment_service().train(tiny_config).checkpoint, tmp_path / "model.npz")
    path.write_bytes(path.read_bytes()[:200])
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path)


def test_checkpoint_version_mismatch(tiny_config, tmp_path):
    checkpoint = get_experiment_service().train(tiny_config).checkpoint
    checkpoint.version = 99
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(save_checkpoint(checkpoint, tmp_path / "model.npz"))


def test_checkpoint_layer_mismatch(tiny_config, tmp_path):
    checkpoint = get_experiment_service().train(tiny_config).checkpoint
    checkpoint.state["shared.0.weight"] = np.zeros((1, 1))
    with pytest.raises(CheckpointError, match="shared.0.weight"):
        load_checkpoint(save_checkpoint(checkpoint, tmp_path / "model.npz"))


def test_invalid_config_in_header_is_a_checkpoint_error(tiny_config, tmp_path):
    path = save_checkpoint(get_experiment_service().train(tiny_config).checkpoint, tmp_path / "model.npz")
    with np.load(path, allow_pickle=False) as archive:
        arrays = {name: archive[name] for name in archive.files}
    meta = json.loads(str(arrays["__meta__"]))
    meta["config"]["schedule"]["warmup_epochs"] = -1
    arrays["__meta__"] = np.array(json.dumps(meta))
    np.savez(path, **arrays)
    with pytest.raises(CheckpointError, match="invalid checkpoint header") as raised:
        load_checkpoint(path)
    assert isinstance(raised.value.__cause__, ConfigError)


def test_fcnn_trains_on_shuffled_labelled_rows_only(tiny_config, monkeypatch):
    config = tiny_config.replace(model="fcnn")
    seen = []
    train_epoch = ExperimentService._train_epoch

    def record(self, model, params, state, batches, *args, **kwargs):
        seen.append(batches)
        return train_epoch(self, model, params, state, batches, *args, **kwargs)

    monkeypatch.setattr(ExperimentService, "_train_epoch", record)
    service = get_experiment_service()
    service.train(config)
    train_split = service.datasets.prepare(config.dataset, config.fraction).splits["train"]
    labelled = int(train_split.mask.sum())
    assert labelled == 18
    assert len(seen) == config.epochs
    for batches in seen:
        assert len(batches) == math.ceil(labelled / config.batch_size)
        assert all(batch.mask.all() for batch in batches)
        rows = np.concatenate([batch.rows for batch in batches])
        assert sorted(rows) == list(np.flatnonzero(train_split.mask))
    assert not all(np.array_equal(seen[0][0].rows, other[0].rows) for other in seen[1:])


def test_fcnn_default_batches_hold_two_hundred_rows(tiny_config):
    split_data = get_experiment_service().datasets.prepare(tiny_config.dataset, 1.0).splits["train"]
    config = tiny_config.replace(model="fcnn", batch_size=200)
    batches = ExperimentService.epoch_batches(split_data, config, np.random.default_rng(0))
    assert len(batches) == math.ceil(int(split_data.mask.sum()) / 200)
    assert sum(batch.size for batch in batches) == int(split_data.mask.sum())


def test_missing_checkpoint(tmp_path):
    with pytest.raises(FileNotFoundError, match="absent.npz"):
        load_checkpoint(tmp_path / "absent.npz")


def test_rmse_oracles():
    truth = np.array([1.0, 2.0, 3.0])
    assert rmse(truth, truth) == 0.0
    assert rmse(truth + 0.05, truth) == pytest.approx(0.05, abs=1e-12)
    with pytest.raises(DataError):
        rmse([], [])


def test_confidence_bounds():
    lower, upper = confidence_bounds([0.5], [0.1])
    assert lower[0] == pytest.approx(0.30400, abs=1e-5)
    assert upper[0] == pytest.approx(0.69600, abs=1e-5)
    lower, upper = confidence_bounds([2.0], [0.0])
    assert lower[0] == upper[0] == 2.0
    lower, upper = confidence_bounds([0.0], [1.0], level=0.5)
    assert upper[0] == pytest.approx(0.674490, abs=1e-6)


@pytest.mark.parametrize("level", [0.0, 1.0, 1.5])
def test_invalid_confidence_level(level):
    with pytest.raises(ConfigError):
        confidence_bounds([0.0], [1.0], level)


def test_prediction_interval_half_width(tiny_config):
    service = get_experiment_service()
    checkpoint = service.train(tiny_config).checkpoint
    trace = service.predict_split(checkpoint, "test", 0.95)
    assert list(trace.columns[:5]) == ["index", "truth", "prediction", "lower", "upper"]
    half = (trace["upper"] - trace["lower"]) / 2
    assert np.allclose(half, 1.959964 * trace["std"], rtol=1e-6)
    assert (trace["std"] > 0).all()


def test_fcnn_interval_is_degenerate(tiny_config):
    service = get_experiment_service()
    checkpoint = service.train(tiny_config.replace(model="fcnn")).checkpoint
    trace = service.predict_split(checkpoint, "test")
    assert (trace["lower"] == trace["upper"]).all()


def test_export_latent_shape(tiny_config):
    service = get_experiment_service()
    checkpoint = service.train(tiny_config).checkpoint
    latent = service.export_latent(checkpoint, "test")
    rows = len(service.split_inputs(checkpoint, "test")[0])
    assert latent.shape == (rows, 3 + 2)
    assert list(latent.columns) == ["z1", "z2", "z3", "y_std", "y"]


def test_export_latent_of_zero_parameters(tiny_config):
    service = get_experiment_service()
    checkpoint = service.train(tiny_config.replace(model="svaer")).checkpoint
    checkpoint.state = {name: np.zeros_like(values) for name, values in checkpoint.state.items()}
    latent = service.export_latent(checkpoint, "validation")
    assert (latent[["z1", "z2", "z3"]] == 0).all().all()


def test_fcnn_has_no_latent_space(tiny_config):
    service = get_experiment_service()
    checkpoint = service.train(tiny_config.replace(model="fcnn")).checkpoint
    with pytest.raises(ConfigError):
        service.export_latent(checkpoint, "test")


def test_single_fraction_sweep_matches_direct_run(tiny_config):
    service = get_experiment_service()
    sweep = service.sweep(tiny_config, [1.0])
    direct = service.train(tiny_config.replace(fraction=1.0))
    assert sweep.table.shape == (1, 1)
    assert list(sweep.table.columns) == ["100%"]
    assert sweep.table.iloc[0, 0] == direct.test_rmse


def test_sweep_term_logs(tiny_config):
    sweep = get_experiment_service().sweep(tiny_config, [1.0], kinds=["ssvaer", "svaer"])
    ssvaer = sweep.metrics[("ssvaer", 1.0, 0)]
    svaer = sweep.metrics[("svaer", 1.0, 0)]
    assert set(ssvaer.columns) - set(svaer.columns) == {"train_pv", "train_recon_reg"}
    assert set(svaer.columns) <= set(ssvaer.columns)
    for log in (ssvaer, svaer):
        assert (log.to_frame()["train_entropy"] == 0).all()


def test_sweep_over_seeds_reports_spread(tiny_config, tmp_path):
    sweep = get_experiment_service().sweep(tiny_config, [0.5, 0.25], seeds=[0, 1], output_dir=tmp_path)
    assert len(sweep.runs) == 4
    assert sweep.points["runs"].tolist() == [2, 2]
    assert list(sweep.table.columns) == ["25%", "50%"]
    assert (tmp_path / "cells" / "ssvaer_f0.5_s1" / "metrics.csv").exists()


def test_parallel_sweep_matches_sequential(tiny_config, monkeypatch):
    sequential = get_experiment_service().sweep(tiny_config, [0.5, 1.0], seeds=[0, 1])
    monkeypatch.setenv("SOFTSENSOR_SWEEP_WORKERS", "3")
    Config.reset()
    ExperimentService._instance = None
    service = get_experiment_service()
    assert service.config.sweep_workers == 3
    parallel = service.sweep(tiny_config, [0.5, 1.0], seeds=[0, 1])
    assert sequential.runs.equals(parallel.runs)


def test_empty_sweep(tiny_config):
    with pytest.raises(ConfigError):
        get_experiment_service().sweep(tiny_config, [])


def test_fraction_labels():
    assert [fraction_label(f) for f in (0.01, 0.142, 0.333, 1.0)] == ["1%", "14.2%", "33.3%", "100%"]


def test_config_dict_round_trip(tiny_config):
    assert ExperimentConfig.from_dict(tiny_config.to_dict()) == tiny_config


@pytest.mark.parametrize("changes", [
    {"model": "gan"},
    {"fraction": 0.0},
    {"batch_size": 0},
    {"select_by": "accuracy"},
    {"clip_norm": -1.0},
])
def test_invalid_configs(tiny_config, changes):
    with pytest.raises(ConfigError):
        tiny_config.replace(**changes).validate()


def test_metrics_rows_need_every_column():
    log = MetricsLog.for_terms(("mse", "total"))
    with pytest.raises(ValueError):
        log.append({"epoch": 0})
