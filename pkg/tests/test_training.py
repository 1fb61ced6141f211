import numpy as np
import pytest
import torch

from stgib import data
from stgib.model import InterpretableForecaster, ModelConfig, predict
from stgib.training import (
    LOSS_NAMES,
    LossVector,
    NumericError,
    TrainConfig,
    WeightState,
    grad_check,
    loss_vector,
    make_check_instance,
    samples_to_tensors,
    total_loss,
    train,
    update_weights,
)


def lv_from(values):
    return LossVector(*[torch.tensor(float(v), dtype=torch.float64) for v in values])


# ---------------------------------------------------------------------------
# total loss
# ---------------------------------------------------------------------------

def test_total_loss_uniform():
    lv = lv_from([1, 1, 1, 1, 1])
    assert float(total_loss(lv, np.full(5, 0.2))) == pytest.approx(1.0)


def test_total_loss_one_hot():
    lv = lv_from([3.5, 1, 2, 4, 5])
    w = np.zeros(5)
    w[0] = 1.0
    assert float(total_loss(lv, w)) == pytest.approx(3.5)


def test_total_loss_hand_case():
    lv = lv_from([2, 4, 9, 9, 9])
    assert float(total_loss(lv, np.array([0.5, 0.5, 0, 0, 0]))) == pytest.approx(3.0)


def test_total_loss_rejects_off_simplex():
    with pytest.raises(ValueError):
        total_loss(lv_from([1, 1, 1, 1, 1]), np.array([0.5, 0.5, 0.5, 0, 0]))


def test_loss_vector_exactly_five_components():
    assert len(LOSS_NAMES) == 5
    assert LOSS_NAMES == ("l_reg", "l_sub", "l_var", "l_con", "l_cls")


def test_loss_vector_check_finite():
    lv = lv_from([1, float("nan"), 1, 1, float("inf")])
    with pytest.raises(NumericError, match="l_sub, l_cls"):
        lv.check_finite()


# ---------------------------------------------------------------------------
# coefficient-of-variation weighting
# ---------------------------------------------------------------------------

def run_updates(loss_rows):
    state = WeightState()
    for row in loss_rows:
        state = update_weights(state, np.asarray(row, dtype=float))
    return state


def test_weights_uniform_during_warmup():
    state = run_updates([[1, 2, 3, 4, 5], [1, 2, 3, 4, 5]])
    np.testing.assert_allclose(state.weights, 0.2)
    assert state.used_fallback


def test_constant_losses_keep_uniform_weights():
    rows = [[1.0, 2.0, 0.5, 1.5, 3.0]] * 8
    state = run_updates(rows)
    np.testing.assert_allclose(state.weights, 0.2)
    assert state.used_fallback


def test_single_varying_component_takes_all_weight():
    rows = [
        [1.0, 1.0, 1.0, 1.0, 1.0],
        [0.9, 1.0, 1.0, 1.0, 1.0],
        [1.2, 1.0, 1.0, 1.0, 1.0],
        [0.7, 1.0, 1.0, 1.0, 1.0],
    ]
    state = run_updates(rows)
    assert state.weights[0] == pytest.approx(1.0)
    np.testing.assert_allclose(state.weights[1:], 0.0, atol=1e-12)


def test_two_equal_variation_components_split_weight():
    rows = [
        [1.0, 1.0, 1.0, 1.0, 1.0],
        [2.0, 2.0, 1.0, 1.0, 1.0],
        [1.0, 1.0, 1.0, 1.0, 1.0],
        [2.0, 2.0, 1.0, 1.0, 1.0],
    ]
    state = run_updates(rows)
    assert state.weights[0] == pytest.approx(0.5)
    assert state.weights[1] == pytest.approx(0.5)
    np.testing.assert_allclose(state.weights[2:], 0.0, atol=1e-12)


def test_weights_on_simplex_after_every_update(rng):
    state = WeightState()
    for _ in range(30):
        state = update_weights(state, rng.uniform(0.1, 2.0, 5))
        assert abs(state.weights.sum() - 1.0) < 1e-9
        assert np.all(state.weights >= 0)
    assert not state.used_fallback


def test_ratio_history_window_is_bounded(rng):
    state = WeightState(window=10)
    for _ in range(25):
        state = update_weights(state, rng.uniform(0.5, 1.5, 5))
    assert all(len(h) == 10 for h in state.history)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def planted_setup(seed=0, n_steps=120):
    spec = data.PlantedSpec(10, (1, 4, 7), 0.1, 8, 2, n_steps, seed)
    graph, signal, truth = data.generate_synthetic(spec)
    labels = data.compute_thresholds(signal, 0.1)
    samples = data.make_windows(signal, labels, 8, 2, 1)
    train_s, val_s, test_s = data.split_chronological(samples)
    config = ModelConfig(n_nodes=10, window=8, horizon=2, hidden_dim=8, seed=seed)
    model = InterpretableForecaster(config, graph.adjacency)
    return model, train_s, val_s, test_s


def test_zero_learning_rate_keeps_parameters():
    model, train_s, val_s, _ = planted_setup()
    before = {k: v.clone() for k, v in model.state_dict().items() if "epochs" not in k
              and "offset" not in k and "scale" not in k}
    train(model, train_s, val_s, TrainConfig(epochs=3, lr=0.0, batch_size=8, seed=0,
                                             patience=None, restore_best=False))
    after = model.state_dict()
    for name, tensor in before.items():
        torch.testing.assert_close(after[name], tensor, rtol=0, atol=0)


def test_training_deterministic():
    results = []
    for _ in range(2):
        model, train_s, val_s, _ = planted_setup()
        result = train(model, train_s, val_s,
                       TrainConfig(epochs=4, batch_size=8, lr=1e-3, seed=3, patience=None))
        results.append((result.history, model.export_tensors()))
    assert results[0][0] == results[1][0]
    for name in results[0][1]:
        np.testing.assert_array_equal(results[0][1][name], results[1][1][name])


def test_training_descends_on_planted_data():
    model, train_s, val_s, _ = planted_setup(seed=1, n_steps=160)
    result = train(model, train_s, val_s,
                   TrainConfig(epochs=50, batch_size=16, lr=1e-3, seed=1, patience=None))
    assert result.history[49]["l_reg"] < result.history[0]["l_reg"]


def test_history_row_schema():
    model, train_s, val_s, _ = planted_setup()
    result = train(model, train_s, val_s,
                   TrainConfig(epochs=2, batch_size=8, lr=1e-3, seed=0, patience=None))
    row = result.history[0]
    assert list(row) == ["epoch", *LOSS_NAMES, "w1", "w2", "w3", "w4", "w5", "val_mae"]
    assert sum(row[f"w{i+1}"] for i in range(5)) == pytest.approx(1.0)


def test_early_stopping_stops():
    model, train_s, val_s, _ = planted_setup()
    result = train(model, train_s, val_s,
                   TrainConfig(epochs=60, batch_size=8, lr=0.0, seed=0, patience=3))
    # lr 0: val MAE constant, best stays at epoch 0, stop after patience epochs
    assert result.stopped_epoch == 3
    assert len(result.history) == 4


def test_epochs_trained_buffer_counts():
    model, train_s, val_s, _ = planted_setup()
    train(model, train_s, val_s,
          TrainConfig(epochs=3, batch_size=8, lr=1e-3, seed=0, patience=None,
                      restore_best=False))
    assert float(model.epochs_trained) == 3.0


def test_non_finite_loss_aborts_with_component_name():
    model, train_s, val_s, _ = planted_setup()
    with torch.no_grad():
        model.reg_head.lin2.bias.fill_(float("nan"))
    with pytest.raises(NumericError, match="l_reg"):
        train(model, train_s, val_s,
              TrainConfig(epochs=1, batch_size=8, lr=1e-3, seed=0, patience=None))


# ---------------------------------------------------------------------------
# model forward mechanics
# ---------------------------------------------------------------------------

def test_forward_deterministic_given_seed():
    model, train_s, _, _ = planted_setup()
    x, y_reg, y_cls, starts = samples_to_tensors(train_s[:6])
    a = model(x, starts, mode="hard", seed=5)
    b = model(x, starts, mode="hard", seed=5)
    torch.testing.assert_close(a.y_hat, b.y_hat, rtol=0, atol=0)
    torch.testing.assert_close(a.lam, b.lam, rtol=0, atol=0)


def test_forward_independent_of_batch_composition():
    model, train_s, _, _ = planted_setup()
    x, _, _, starts = samples_to_tensors(train_s[:6])
    full = model(x, starts, mode="hard", seed=5)
    part = model(x[2:4], starts[2:4], mode="hard", seed=5)
    torch.testing.assert_close(full.y_hat[2:4], part.y_hat, rtol=0, atol=0)


def test_checkpoint_round_trip_restores_outputs(tmp_path):
    from stgib.checkpoint import read_checkpoint, write_checkpoint

    model, train_s, val_s, _ = planted_setup()
    train(model, train_s, val_s,
          TrainConfig(epochs=2, batch_size=8, lr=1e-3, seed=0, patience=None))
    write_checkpoint(tmp_path / "m.gtck", model.export_tensors())

    model2, *_ = planted_setup()
    model2.load_tensors(read_checkpoint(tmp_path / "m.gtck"))
    x, _, _, starts = samples_to_tensors(val_s)
    torch.testing.assert_close(
        predict(model, x, starts, 0).y_hat, predict(model2, x, starts, 0).y_hat,
        atol=1e-6, rtol=1e-5,
    )


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    from stgib.checkpoint import CheckpointError

    model, *_ = planted_setup()
    tensors = model.export_tensors()
    name = next(iter(tensors))
    tensors[name] = tensors[name][..., :1]
    with pytest.raises(CheckpointError, match="shape mismatch"):
        model.load_tensors(tensors)


# ---------------------------------------------------------------------------
# gradient check
# ---------------------------------------------------------------------------

def test_grad_check_all_losses_under_tolerance():
    model, sample = make_check_instance(seed=0)
    report = grad_check(model, sample)
    assert set(report) == set(LOSS_NAMES)
    for name, err in report.items():
        assert err < 1e-4, f"{name}: {err}"


def test_grad_check_requires_float64():
    model, sample = make_check_instance(seed=0)
    with pytest.raises(ValueError):
        grad_check(model.float(), tuple(t.float() if t.is_floating_point() else t
                                        for t in sample))
