import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import fd_max_rel_error, plain_forward, random_net_and_batch
from zigcast import nn
from zigcast.errors import InvalidInputError, LoadError
from zigcast.nn import (AdamState, MlpModel, TrainConfig, adam_step, fit, forward, init_model,
                        load_model, loss_and_gradients, predict_raw, save_model, standardize_fit,
                        validation_nll)
from zigcast.synth import planted_corpus
from zigcast.zig import link_transform, mean_nll, zig_log_pdf


def test_standardize_examples():
    s = standardize_fit(np.array([[1.0, 5.0, 2.0], [3.0, 5.0, 4.0]]))
    assert s.mean[0] == 2.0 and s.std[0] == 1.0
    assert s.mean[1] == 5.0 and s.std[1] == 1.0 and s.constant[1]
    s = standardize_fit(np.array([[2.0], [4.0], [6.0], [8.0]]))
    assert s.mean[0] == 5.0
    assert s.std[0] == pytest.approx(math.sqrt(((9 + 1 + 1 + 9) / 4)), abs=1e-15)
    assert round(float(s.std[0]), 5) == 2.23607
    assert not s.constant[0]


def test_standardize_errors():
    with pytest.raises(InvalidInputError):
        standardize_fit(np.array([[1.0, 2.0]]))
    with pytest.raises(InvalidInputError):
        standardize_fit(np.array([[1.0], [np.nan]]))


@settings(max_examples=50)
@given(arrays(float, st.tuples(st.integers(2, 40), st.integers(1, 5)), elements=st.floats(-1e3, 1e3)))
def test_standardize_applied_moments(x):
    s = standardize_fit(x)
    z = s.transform(x)
    live = ~s.constant
    assert np.all(np.abs(z.mean(axis=0)) < 1e-10)
    assert np.allclose(z.std(axis=0)[live], 1.0, atol=1e-10)


def test_forward_zero_net():
    dims = [4, 5, 3]
    m = MlpModel(dims, [np.zeros((4, 5)), np.zeros((5, 3))], [np.zeros(5), np.zeros(3)])
    assert np.array_equal(forward(m, np.array([1.0, -2.0, 3.0, 0.5])), np.zeros(3))


def test_forward_no_dropout_train_equals_inference():
    m = init_model(5, np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(7, 5))
    assert np.array_equal(forward(m, x), forward(m, x, train_mode=True, rng=np.random.default_rng(2)))


def test_forward_toy_matches_matrix_chain():
    rng = np.random.default_rng(3)
    w = [rng.normal(size=(4, 2)), rng.normal(size=(2, 3))]
    b = [rng.normal(size=2), rng.normal(size=3)]
    m = MlpModel([4, 2, 3], w, b)
    x = rng.normal(size=(10, 4))
    # hand-written chain for the first row
    h = [max(0.0, sum(x[0, i] * w[0][i, j] for i in range(4)) + b[0][j]) for j in range(2)]
    out0 = [sum(h[i] * w[1][i, j] for i in range(2)) + b[1][j] for j in range(3)]
    assert np.allclose(forward(m, x[0]), out0, rtol=0, atol=1e-14)
    assert np.allclose(forward(m, x), plain_forward(w, b, x), rtol=0, atol=1e-14)


def test_forward_dimension_mismatch():
    m = init_model(5, np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        forward(m, np.zeros(4))


def test_inverted_dropout_preserves_expectation():
    rng = np.random.default_rng(0)
    m = init_model(3, rng, hidden=(50,), dropout_rate=0.08)
    x = np.tile(rng.normal(size=(1, 3)), (40000, 1))
    train = forward(m, x, train_mode=True, rng=np.random.default_rng(5))
    # the head is linear, so averaging dropped-out outputs recovers the inference output
    assert np.allclose(train.mean(axis=0), forward(m, x[0]), atol=0.02)
    assert not np.allclose(train[0], train[1])


def test_loss_zero_net_single_zero():
    m = MlpModel([2, 3], [np.zeros((2, 3))], [np.zeros(3)])
    nll, grads = loss_and_gradients(m, np.array([[0.3, -1.0]]), np.array([0.0]))
    assert nll == pytest.approx(math.log(2), abs=1e-15)


def test_loss_matches_mean_nll():
    m, x, y = random_net_and_batch(1)
    nll, _ = loss_and_gradients(m, x, y)
    assert nll == pytest.approx(mean_nll(y, forward(m, x)), abs=1e-14)
    ref = -np.mean([zig_log_pdf(yi, link_transform(r)) for yi, r in zip(y, forward(m, x))])
    assert nll == pytest.approx(ref, abs=1e-12)


def test_loss_empty_batch():
    m = init_model(3, np.random.default_rng(0))
    with pytest.raises(InvalidInputError):
        loss_and_gradients(m, np.zeros((0, 3)), np.zeros(0))


def test_gradients_finite_difference_small_net():
    m, x, y = random_net_and_batch(11, dims=(6, 8, 3), n=16)
    assert fd_max_rel_error(m, x, y) <= 1e-4


def test_gradients_finite_difference_default_architecture():
    rng = np.random.default_rng(2)
    m = init_model(4, rng)
    x = rng.normal(size=(5, 4))
    y = np.array([0.0, 0.4, 1.5, 0.0, 2.2])
    assert fd_max_rel_error(m, x, y) <= 1e-4


def test_duplicated_batch_invariance():
    m, x, y = random_net_and_batch(4)
    nll, g = loss_and_gradients(m, x, y)
    nll2, g2 = loss_and_gradients(m, np.vstack([x, x]), np.concatenate([y, y]))
    assert nll2 == pytest.approx(nll, abs=1e-14)
    for a, b in zip(g, g2):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_adam_zero_gradient():
    p = [np.array([1.0, -2.0])]
    new, state = adam_step(p, [np.zeros(2)], AdamState.zeros_like(p), 0.1)
    assert np.array_equal(new[0], p[0]) and state.t == 1


def test_adam_first_step_magnitude():
    p = [np.array([0.0, 0.0, 0.0])]
    g = [np.array([3.0, -1e-3, 250.0])]
    new, _ = adam_step(p, g, AdamState.zeros_like(p), 0.01)
    assert np.allclose(new[0], -0.01 * np.sign(g[0]), rtol=1e-4)


def test_adam_scalar_convergence():
    w = [np.array(0.0)]
    state = AdamState.zeros_like(w)
    for _ in range(200):
        w, state = adam_step(w, [2 * (w[0] - 3.0)], state, 0.1)
    assert abs(float(w[0]) - 3.0) < 0.05


def test_full_batch_adam_mostly_monotone():
    for seed in range(10):
        m, x, y = random_net_and_batch(seed, dims=(5, 20, 25, 3), n=64)
        params = m.params()
        state = AdamState.zeros_like(params)
        losses = []
        for _ in range(51):
            loss, g = loss_and_gradients(m.with_params(params), x, y)
            losses.append(loss)
            params, state = adam_step(params, g, state, 1e-3)
        ups = sum(b > a for a, b in zip(losses, losses[1:]))
        assert ups <= 2, (seed, ups)


def test_train_config_validation():
    with pytest.raises(InvalidInputError):
        TrainConfig(dropout_grid=[0.1])
    with pytest.raises(InvalidInputError):
        TrainConfig(lr_reduce_factor=1.0)
    with pytest.raises(InvalidInputError):
        TrainConfig.from_dict({"bogus": 1})


def _small_corpus(seed=0, n=600):
    x, y, _ = planted_corpus(n, n_features=4, seed=seed)
    return x[: n // 2], y[: n // 2], x[n // 2:], y[n // 2:]


def test_fit_one_epoch():
    tx, ty, vx, vy = _small_corpus()
    _, hist = fit(tx, ty, vx, vy, TrainConfig(dropout_grid=[0.0], max_epochs=1, seed=3))
    assert len(hist.train_nll) == len(hist.val_nll) == len(hist.learning_rate) == 1


def test_fit_deterministic():
    tx, ty, vx, vy = _small_corpus()
    cfg = TrainConfig(dropout_grid=[0.0, 0.04], max_epochs=8, seed=5, batch_size=64)
    a, _ = fit(tx, ty, vx, vy, cfg)
    b, _ = fit(tx, ty, vx, vy, cfg)
    assert save_model(a) == save_model(b)


def test_early_stopping_restores_best():
    tx, ty, vx, vy = _small_corpus(1)
    cfg = TrainConfig(dropout_grid=[0.02, 0.06], max_epochs=60, early_stop_patience=3, lr_reduce_patience=2,
                      seed=1, batch_size=32, initial_learning_rate=5e-3)
    model, hist = fit(tx, ty, vx, vy, cfg)
    sel = hist.selected_epoch
    assert sum(hist.selected) == 1
    assert hist.val_nll[sel] == min(hist.val_nll)
    assert validation_nll(model, model.scaler.transform(vx), vy) == hist.val_nll[sel]
    assert len(hist.val_nll) < 60
    assert [g["dropout_rate"] for g in hist.grid] == [0.02, 0.06]
    # the learning rate only ever shrinks, by the configured factor
    lrs = hist.learning_rate
    assert all(b in (a, a * 0.5) for a, b in zip(lrs, lrs[1:]))


def test_fit_diverged_grid_raises():
    tx, ty, vx, vy = _small_corpus()
    cfg = TrainConfig(dropout_grid=[0.0, 0.02], max_epochs=3, seed=0, initial_learning_rate=1e300)
    with np.errstate(all="ignore"), pytest.raises(FloatingPointError):
        fit(tx, ty, vx, vy, cfg)


def test_fit_grid_point_failure_recorded(monkeypatch):
    real = nn._train_one

    def flaky(*args):
        if args[5] == 0.0:
            raise FloatingPointError("non-finite training loss at epoch 0")
        return real(*args)

    monkeypatch.setattr(nn, "_train_one", flaky)
    tx, ty, vx, vy = _small_corpus()
    model, hist = fit(tx, ty, vx, vy, TrainConfig(dropout_grid=[0.0, 0.04], max_epochs=2, seed=0))
    assert model.dropout_rate == 0.04
    assert [g["status"] for g in hist.grid] == ["failed", "ok"]


def test_fit_planted_three_feature_linear():
    coef = np.array([[0.8, -0.3, 0.2], [-0.5, 0.4, 0.0], [0.0, 0.2, -0.6]])
    x, y, raw = planted_corpus(25000, n_features=3, seed=21, coef=coef)
    tx, ty, vx, vy = x[:20000], y[:20000], x[20000:], y[20000:]
    model, _ = fit(tx, ty, vx, vy, TrainConfig(seed=0, dropout_grid=[0.0]))
    fitted = mean_nll(vy, predict_raw(model, vx))
    truth = mean_nll(vy, raw[20000:])
    assert fitted - truth <= 0.05


def test_save_load_roundtrip():
    tx, ty, vx, vy = _small_corpus()
    model, _ = fit(tx, ty, vx, vy, TrainConfig(dropout_grid=[0.02], max_epochs=3, seed=1),
                   feature_names=["a", "b", "c", "d"], schema_hash="0123456789abcdef")
    doc = save_model(model)
    again = load_model(doc)
    assert save_model(again) == doc
    assert again.feature_names == ["a", "b", "c", "d"] and again.schema_hash == "0123456789abcdef"
    probe = np.random.default_rng(0).normal(size=(100, 4))
    assert predict_raw(again, probe).tobytes() == predict_raw(model, probe).tobytes()


def test_load_errors_name_field():
    m = init_model(3, np.random.default_rng(0), scaler=standardize_fit(np.eye(3)))
    doc = json.loads(save_model(m))
    bad = json.loads(json.dumps(doc))
    bad["layers"][2]["weights"] = bad["layers"][2]["weights"][:-1]
    with pytest.raises(LoadError, match=r"layers\[2\]\.weights"):
        load_model(bad)
    bad = dict(doc, schema_version=99)
    with pytest.raises(LoadError, match="schema_version"):
        load_model(bad)
    bad = json.loads(json.dumps(doc))
    bad["scaler"]["std"][0] = 0.0
    with pytest.raises(LoadError, match="scaler.std"):
        load_model(bad)
