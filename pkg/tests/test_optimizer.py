import numpy as np
import pytest

from conftest import TINY_SIZES, build_batch
from softsensor.Autodiff import Graph, Tensor
from softsensor.Models import NoiseSource, SvaerModel
from softsensor.Optimizer import AdamState, LrSchedule, adam_step, clip_by_global_norm, lr_at
from softsensor.exceptions import ConfigError, NumericOverflowError, ShapeError


def params_with(value):
    return {"w": Tensor(np.array([value]), requires_grad=True)}


def test_first_step_moves_by_learning_rate():
    params = params_with(1.0)
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.array([1.0])}, state, lr=0.01)
    assert params["w"].values[0] == pytest.approx(1.0 - 0.01 / (1.0 + 1e-8), abs=1e-15)
    assert state.step == 1


def test_zero_gradient_leaves_parameters():
    params = params_with(2.5)
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.array([0.0])}, state, lr=0.01)
    assert params["w"].values[0] == 2.5


def test_missing_gradient_counts_as_zero():
    params = {"a": Tensor([1.0]), "b": Tensor([1.0])}
    state = AdamState.for_params(params)
    adam_step(params, {"a": np.array([1.0])}, state, lr=0.1)
    assert params["b"].values[0] == 1.0
    assert params["a"].values[0] < 1.0


def test_step_counter_increments_once_per_call():
    params = params_with(0.0)
    state = AdamState.for_params(params)
    for _ in range(3):
        adam_step(params, {"w": np.array([0.5])}, state, lr=0.01)
    assert state.step == 3


def test_invalid_learning_rate():
    params = params_with(0.0)
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.array([1.0])}, AdamState.for_params(params), lr=0.0)


def test_gradient_shape_mismatch():
    params = params_with(0.0)
    with pytest.raises(ShapeError):
        adam_step(params, {"w": np.array([1.0, 2.0])}, AdamState.for_params(params), lr=0.01)


def test_non_finite_gradient():
    params = params_with(0.0)
    with pytest.raises(NumericOverflowError):
        adam_step(params, {"w": np.array([np.nan])}, AdamState.for_params(params), lr=0.01)


def test_global_norm_clipping():
    clipped = clip_by_global_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
    assert clipped["a"][0] == pytest.approx(0.6)
    assert clipped["b"][0] == pytest.approx(0.8)
    unchanged = clip_by_global_norm({"a": np.array([0.3])}, 1.0)
    assert unchanged["a"][0] == 0.3


@pytest.mark.parametrize("epoch, expected", [
    (0, 0.0001 + 0.0099 / 60),
    (59, 0.01),
    (60, 0.01),
    (299, 0.0001),
])
def test_default_schedule(epoch, expected):
    assert lr_at(LrSchedule(), epoch) == pytest.approx(expected, abs=1e-15)


def test_cosine_midpoint():
    schedule = LrSchedule(warmup_epochs=60, total_epochs=301)
    assert lr_at(schedule, 180) == pytest.approx(0.00505, abs=1e-15)


def test_schedule_is_monotone_in_each_phase():
    schedule = LrSchedule()
    rates = [lr_at(schedule, epoch) for epoch in range(300)]
    assert all(a <= b for a, b in zip(rates[:60], rates[1:60]))
    assert all(a >= b for a, b in zip(rates[60:], rates[61:]))


def test_zero_length_cosine_phase():
    schedule = LrSchedule(warmup_epochs=4, total_epochs=5)
    assert lr_at(schedule, 4) == pytest.approx(0.01, abs=1e-15)


def test_no_warmup():
    assert lr_at(LrSchedule(warmup_epochs=0, total_epochs=10), 0) == pytest.approx(0.01, abs=1e-15)


@pytest.mark.parametrize("epoch", [-1, 300])
def test_epoch_out_of_range(epoch):
    with pytest.raises(ValueError):
        lr_at(LrSchedule(), epoch)


@pytest.mark.parametrize("kwargs", [
    {"lr_max": 0.001, "lr_min": 0.01},
    {"lr_min": 0.0},
    {"warmup_epochs": 300},
    {"warmup_epochs": -1},
])
def test_invalid_schedules(kwargs):
    with pytest.raises(ConfigError):
        LrSchedule(**kwargs)


def largest_move(params, grads, state, lr):
    before = {name: tensor.values.copy() for name, tensor in params.items()}
    adam_step(params, grads, state, lr=lr)
    return max(np.max(np.abs(params[name].values - before[name])) for name in params)


def test_step_never_exceeds_learning_rate():
    rng = np.random.default_rng(3)
    lr = 0.05
    magnitudes = 10.0 ** rng.uniform(-8, 8, (4, 3))
    steady = rng.choice([-1.0, 1.0], (4, 3)) * magnitudes
    phases = [
        [rng.normal(size=(4, 3)) * magnitudes],
        [steady] * 30,
        [steady * 0.5 ** step for step in range(30)],
    ]
    for grads in phases:
        params = {"w": Tensor(rng.normal(size=(4, 3)), requires_grad=True)}
        state = AdamState.for_params(params)
        for grad in grads:
            assert largest_move(params, {"w": grad}, state, lr) <= lr * (1 + 1e-9)


def test_svaer_direction_is_unit_after_real_updates():
    model = SvaerModel(3, TINY_SIZES, seed=1)
    params = model.parameters()
    state = AdamState.for_params(params)
    initial = model.direction.values.copy()
    for step in range(5):
        with Graph() as graph:
            terms = model.loss_terms(build_batch(seed=step), NoiseSource(seed=step))
            grads = graph.backward(terms.total)
        adam_step(params, {name: grads.get(p.id, np.zeros_like(p.values)) for name, p in params.items()},
                  state, lr=0.1)
        model.apply_constraints()
        norm = np.linalg.norm(model.direction.values)
        assert 1 - 1e-9 <= norm <= 1 + 1e-9
    assert not np.allclose(model.direction.values, initial)
