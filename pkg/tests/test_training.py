import json

import numpy as np
import pytest

from orthofd.data import DataError, GaussianSpec, TimeSeriesDataset, generate_gaussian
from orthofd.loss import LossWeights
from orthofd.model import ModelConfig, encode_deterministic, init_params
from orthofd.training import (CheckpointError, GridSpec, LearningCurve, TrainConfig, grid_search,
                              load_checkpoint, save_checkpoint, split_series, train, window_starts,
                              write_ranking_csv)

SMALL = dict(input_dim=4, shared_widths=(4, 8, 6), deterministic_widths=(6, 4), stochastic_widths=(6, 4))


@pytest.fixture(scope="module")
def toy_data():
    return generate_gaussian(GaussianSpec(dim=4, n=200, seed=0))


def small_cfg(seed=0):
    return ModelConfig(seed=seed, **SMALL)


def test_window_helpers():
    assert window_starts(200, 64) == [0, 64, 128]
    assert split_series(200, 0.2) == 160


def test_training_is_deterministic(toy_data):
    tc = TrainConfig(epochs=5, window_length=16, seed=3)
    p1, c1 = train(small_cfg(), tc, toy_data)
    p2, c2 = train(small_cfg(), tc, toy_data)
    for k, v in p1.blocks().items():
        assert v.tobytes() == p2.blocks()[k].tobytes()
    assert [b.total for b in c1.train] == [b.total for b in c2.train]


def test_loss_decreases(toy_data):
    tc = TrainConfig(epochs=50, window_length=16, learning_rate=3e-3, patience=100)
    _, curve = train(small_cfg(), tc, toy_data)
    assert len(curve) == 50
    assert curve.train[-1].total < curve.train[0].total
    assert curve.validation[-1].total < curve.validation[0].total


def test_zero_epochs_returns_initial(toy_data):
    params, curve = train(small_cfg(1), TrainConfig(epochs=0, window_length=16), toy_data)
    init = init_params(small_cfg(1))
    for k, v in params.blocks().items():
        np.testing.assert_array_equal(v, init.blocks()[k])
    assert len(curve) == 0


def test_validation_tail_never_used_for_gradients(toy_data):
    tc = TrainConfig(epochs=3, window_length=16, seed=1)
    altered = toy_data.values.copy()
    altered[split_series(200, 0.2):] += 100.0
    p1, c1 = train(small_cfg(), tc, toy_data)
    p2, c2 = train(small_cfg(), tc, TimeSeriesDataset(altered))
    assert [b.total for b in c1.train] == [b.total for b in c2.train]
    assert [b.total for b in c1.validation] != [b.total for b in c2.validation]


def test_best_epoch_parameters_returned(toy_data):
    tc = TrainConfig(epochs=8, window_length=16, seed=2, learning_rate=5e-2, patience=100)
    params, curve = train(small_cfg(), tc, toy_data)
    best = int(np.argmin([b.total for b in curve.validation])) + 1
    assert curve.best_epoch == best


def test_early_stopping(toy_data):
    tc = TrainConfig(epochs=500, window_length=16, patience=3, min_delta=1e9)
    _, curve = train(small_cfg(), tc, toy_data)
    assert len(curve) == 4 and curve.best_epoch == 1


def test_training_input_errors(toy_data):
    with pytest.raises(DataError):
        train(small_cfg(), TrainConfig(window_length=500), toy_data)
    with pytest.raises(ValueError):
        TrainConfig(window_length=1)
    with pytest.raises(Exception, match="columns"):
        train(ModelConfig(), TrainConfig(), toy_data)


def test_curve_csv(tmp_path, toy_data):
    _, curve = train(small_cfg(), TrainConfig(epochs=2, window_length=16), toy_data)
    p = tmp_path / "curve.csv"
    curve.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "epoch,split,orthogonality,nll,smoothness,kl,total"
    assert len(lines) == 1 + 2 * 2


def test_grid_single_candidate(toy_data):
    grid = GridSpec(shared_widths=[(4, 8, 6)], deterministic_widths=[(6, 4)], stochastic_widths=[(6, 4)],
                    window_lengths=[16])
    [res] = grid_search(grid, toy_data, budget_epochs=2)
    assert res.error is None and res.epochs_run == 2 and np.isfinite(res.validation_total)


def test_grid_with_default_shapes_and_bad_candidate():
    data = generate_gaussian(GaussianSpec(n=200, seed=1))
    grid = GridSpec(shared_widths=[(16, 100, 50), (16, 100, 40)], window_lengths=[32])
    results = grid_search(grid, data, budget_epochs=1)
    assert results[0].error is None
    assert results[-1].error is not None and "Shape" in results[-1].error


def test_grid_ranking_prefers_lower_validation(toy_data, tmp_path):
    grid = GridSpec(shared_widths=[(4, 8, 6)], deterministic_widths=[(6, 4)], stochastic_widths=[(6, 4)],
                    lambda_kl=[1.0, 50.0], window_lengths=[16])
    results = grid_search(grid, toy_data, budget_epochs=3)
    totals = {r.settings["lambda_kl"]: r.validation_total for r in results}
    winner = min(totals, key=totals.get)
    assert results[0].settings["lambda_kl"] == winner
    write_ranking_csv(results, tmp_path / "rank.csv")
    head = (tmp_path / "rank.csv").read_text().splitlines()[0]
    assert head.startswith("rank,index,shared_widths")


def test_grid_from_dict_rejects_unknown():
    with pytest.raises(ValueError):
        GridSpec.from_dict({"bogus": [1]})
    assert len(GridSpec.from_dict({"lambda_kl": [0.1, 1.0], "window_lengths": [32, 64]}).candidates()) == 4


def test_checkpoint_round_trip(tmp_path):
    cfg = ModelConfig(seed=5)
    params = init_params(cfg)
    p = tmp_path / "ck.json"
    save_checkpoint(params, cfg, p, extra={"note": 1})
    loaded, cfg2 = load_checkpoint(p)
    assert cfg2 == cfg
    for k, v in params.blocks().items():
        assert v.tobytes() == loaded.blocks()[k].tobytes()
    y = np.linspace(0, 4, 16)
    assert encode_deterministic(params, y).tobytes() == encode_deterministic(loaded, y).tobytes()


def test_checkpoint_tamper_and_version(tmp_path):
    cfg = ModelConfig(**SMALL)
    p = tmp_path / "ck.json"
    save_checkpoint(init_params(cfg), cfg, p)
    doc = json.loads(p.read_text())
    doc["parameters"]["shared.0.bias"]["values"][0] += 1.0
    p.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(p)
    doc["format_version"] = 99
    p.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError, match="format_version"):
        load_checkpoint(p)
    p.write_text("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_learning_curve_empty():
    assert len(LearningCurve()) == 0


def test_train_config_accepts_weight_dict():
    tc = TrainConfig(weights={"orthogonality": 2.0})
    assert isinstance(tc.weights, LossWeights) and tc.weights.orthogonality == 2.0
