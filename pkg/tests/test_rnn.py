import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aeroslosh.core import TimeSeriesDataset
from aeroslosh.rnn import (AdamState, CheckpointError, RnnModel, TrainConfig, adam_step,
                           bptt_gradients, cell_step, checkpoint_dict, forward_sequence,
                           load_checkpoint, loss, predict_rollout, predict_single_step, relu,
                           save_checkpoint, train)


def test_relu():
    assert relu(-1.0) == 0.0 and relu(2.0) == 2.0 and relu(0.0) == 0.0


def test_cell_hand_recurrence():
    one = np.ones((1, 1))
    S = np.zeros(1)
    out = []
    for x in ([1.0], [1.0]):
        S = cell_step(one, one, np.zeros(1), np.array(x), S)
        out.append(S[0])
    assert out == [1.0, 2.0]


def test_cell_zero_weights_and_feedforward():
    rng = np.random.default_rng(0)
    x = rng.normal(size=3)
    assert np.all(cell_step(np.zeros((3, 4)), np.zeros((4, 4)), np.zeros(4), x, np.ones(4)) == 0)
    Wx, b = rng.normal(size=(3, 4)), rng.normal(size=4)
    np.testing.assert_array_equal(cell_step(Wx, np.zeros((4, 4)), b, x, rng.normal(size=4)),
                                  relu(x @ Wx + b))
    with pytest.raises(ValueError):
        cell_step(Wx, np.zeros((4, 4)), b, np.zeros(2), np.zeros(4))


def _toy(seed=0, sizes=(3,), n_in=2, n_out=2):
    m = RnnModel.init(n_in, sizes, n_out, seed=seed)
    rng = np.random.default_rng(seed + 100)
    for k in m.params:
        if k.startswith("b"):
            m.params[k] = rng.normal(scale=0.3, size=m.params[k].shape)
    return m


def test_forward_zero_model_outputs_bias():
    m = _toy()
    for k in m.params:
        m.params[k][...] = 0.0
    m.params["b_out"][:] = [0.5, -1.5]
    y, _ = forward_sequence(m, np.random.default_rng(1).normal(size=(7, 2)))
    np.testing.assert_array_equal(y, np.tile([0.5, -1.5], (7, 1)))


def test_forward_single_step_is_cell_plus_readout():
    m = _toy(sizes=(3, 4))
    x = np.array([[0.3, -0.7]])
    p = m.params
    s0 = cell_step(p["W_x0"], p["W_s0"], p["b0"], x[0], np.zeros(3))
    s1 = cell_step(p["W_x1"], p["W_s1"], p["b1"], s0, np.zeros(4))
    y, finals = forward_sequence(m, x)
    np.testing.assert_allclose(y[0], s1 @ p["W_out"] + p["b_out"], rtol=1e-14)
    np.testing.assert_allclose(finals[1], s1, rtol=1e-14)


def test_forward_matches_hand_unrolled_recurrence():
    m = _toy(sizes=(3, 4))
    x = np.random.default_rng(3).normal(size=(6, 2))
    p = m.params
    s = [np.zeros(3), np.zeros(4)]
    ys = []
    for xt in x:
        s[0] = cell_step(p["W_x0"], p["W_s0"], p["b0"], xt, s[0])
        s[1] = cell_step(p["W_x1"], p["W_s1"], p["b1"], s[0], s[1])
        ys.append(s[1] @ p["W_out"] + p["b_out"])
    np.testing.assert_allclose(forward_sequence(m, x)[0], ys, rtol=1e-13, atol=1e-15)


def test_forward_deterministic_and_window_isolated():
    m = _toy()
    rng = np.random.default_rng(2)
    X = rng.normal(size=(2, 5, 2))
    y1, _ = forward_sequence(m, X)
    y2, _ = forward_sequence(m, X[::-1])
    np.testing.assert_array_equal(y1[::-1], y2)
    np.testing.assert_array_equal(y1, forward_sequence(m, X)[0])
    with pytest.raises(ValueError):
        forward_sequence(m, np.zeros((5, 3)))


def test_loss_examples():
    assert loss(np.ones((2, 3, 2)), np.ones((2, 3, 2))) == 0.0
    assert loss(np.array([[0.5]]), np.array([[0.0]])) == pytest.approx(0.25)
    # two windows of one step, errors e and 0
    out = np.array([[[0.3]], [[0.0]]])
    assert loss(out, np.zeros_like(out)) == pytest.approx(0.09 / 2)
    # root variant: sqrt of the total divided by the count
    assert loss(out, np.zeros_like(out), "root") == pytest.approx(0.3 / 2)
    with pytest.raises(ValueError):
        loss(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        loss(np.zeros((2, 2)), np.zeros((2, 2)), "mae")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-10, 10).filter(lambda v: v == 0 or abs(v) > 1e-100))
def test_loss_nonnegative_zero_iff_equal(seed, shift):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=(3, 4, 2))
    assert loss(y, y) == 0.0
    z = y.copy()
    z[1, 2, 0] += shift
    assert (loss(z, y) > 0) == bool(np.any(z != y))


def fd_check(model, batch, eps=1e-6):
    """Largest relative discrepancy between BPTT and central differences."""
    _, grads = bptt_gradients(model, batch)
    worst = 0.0
    for k, P in model.params.items():
        fd = np.empty_like(P)
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + eps
            lp = loss(forward_sequence(model, batch[0])[0], batch[1])
            P[idx] = old - eps
            lm = loss(forward_sequence(model, batch[0])[0], batch[1])
            P[idx] = old
            fd[idx] = (lp - lm) / (2 * eps)
        g = grads[k]
        scale = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-6)
        worst = max(worst, float(np.max(np.abs(g - fd) / scale)))
    return worst


def _toy_batch(seed, windows=3, steps=5):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(windows, steps, 2)), rng.normal(size=(windows, steps, 2))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_bptt_matches_finite_differences(seed):
    assert fd_check(_toy(seed), _toy_batch(seed)) < 1e-5


def test_bptt_two_layers_matches_finite_differences():
    assert fd_check(_toy(5, sizes=(3, 4)), _toy_batch(5)) < 1e-5


def test_bptt_zero_error_zero_gradient():
    m = _toy()
    x = np.random.default_rng(0).normal(size=(2, 5, 2))
    y, _ = forward_sequence(m, x)
    L, g = bptt_gradients(m, (x, y))
    assert L == 0.0
    assert all(np.all(v == 0.0) for v in g.values())


def test_bptt_sum_is_linear_in_windows():
    m = _toy()
    x, y = _toy_batch(4, windows=1)
    _, g1 = bptt_gradients(m, (x, y), reduction="sum")
    _, g2 = bptt_gradients(m, (np.concatenate([x, x]), np.concatenate([y, y])),
                           reduction="sum")
    for k in g1:
        np.testing.assert_allclose(g2[k], 2 * g1[k], rtol=1e-13, atol=1e-15)


def _adam_quadratic(target, steps=2000, lr=0.01):
    p = {"w": np.array([0.0])}
    st_ = AdamState.zeros_like(p)
    for _ in range(steps):
        adam_step(p, {"w": 2 * (p["w"] - target)}, st_, lr)
    return p["w"][0]


def test_adam_quadratic_and_mirror():
    w = _adam_quadratic(3.0)
    assert abs(w - 3.0) < 1e-3
    assert _adam_quadratic(-3.0) == -w


def test_adam_zero_gradient():
    p = {"w": np.array([1.5, -2.0])}
    st_ = AdamState.zeros_like(p)
    adam_step(p, {"w": np.zeros(2)}, st_)
    np.testing.assert_array_equal(p["w"], [1.5, -2.0])
    assert st_.t == 1


def _series(n=200, const=False):
    t = np.arange(n) * 0.5
    h = 0.01 * np.sin(2 * math.pi * t / 100.0)
    a = 0.03 * np.sin(2 * math.pi * t / 100.0 + 0.4)
    cl = np.full(n, 0.2) if const else 0.3 * a + 0.1 * np.cos(2 * math.pi * t / 100.0)
    cm = np.full(n, -0.05) if const else -0.05 * a
    return TimeSeriesDataset(("t", "h_bar", "alpha", "C_L", "C_M"),
                             np.column_stack([t, h, a, cl, cm]), 0.5)


def test_train_constant_target():
    # scaled constant channels are all zero, so the bias alone can fit them
    _, hist = train(_series(const=True), [8], TrainConfig(epochs=300, batch_len=10,
                                                          learning_rate=1e-2,
                                                          final_learning_rate=None))
    assert hist[-1] < 1e-5 < hist[0]
    assert np.all(np.isfinite(hist))


def test_train_deterministic_and_zero_lr():
    cfg = TrainConfig(epochs=20, batch_len=10, learning_rate=0.0)
    m1, h1 = train(_series(), [6, 5], cfg)
    init = RnnModel.init(4, [6, 5], 2, seed=np.random.default_rng(0))
    for k in init.params:
        np.testing.assert_array_equal(m1.params[k], init.params[k])
    cfg = TrainConfig(epochs=30, batch_len=10)
    a, ha = train(_series(), [6, 5], cfg)
    b, hb = train(_series(), [6, 5], cfg)
    assert ha.tobytes() == hb.tobytes()
    assert json.dumps(checkpoint_dict(a)) == json.dumps(checkpoint_dict(b))


def test_train_config_validation():
    for kw in ({"epochs": 0}, {"batch_len": 0}, {"adam_beta1": 1.0}, {"loss_variant": "x"},
               {"final_learning_rate": 0.0}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)
    c = TrainConfig(epochs=11, learning_rate=1e-3, final_learning_rate=1e-5)
    assert c.lr_at(0) == pytest.approx(1e-3) and c.lr_at(10) == pytest.approx(1e-5)
    assert TrainConfig(final_learning_rate=None).lr_at(500) == 1e-3


def test_checkpoint_round_trip(tmp_path):
    m, _ = train(_series(), [6, 5], TrainConfig(epochs=15, batch_len=10))
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_checkpoint(m, p1)
    m2 = load_checkpoint(p1)
    save_checkpoint(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()
    for k in m.params:
        np.testing.assert_array_equal(m.params[k], m2.params[k])
    win = _series().select(m.input_channels).samples[:12]
    np.testing.assert_array_equal(predict_single_step(m, win), predict_single_step(m2, win))


def test_checkpoint_corrupted(tmp_path):
    m = _toy()
    d = checkpoint_dict(m)
    d["weights"]["W_x0"]["shape"] = [3, 2]
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    d = checkpoint_dict(m)
    d["weights"]["W_x0"]["shape"] = [2, 4]
    p.write_text(json.dumps(d))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    p.write_text("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    d = checkpoint_dict(m)
    del d["arch"]
    p.write_text(json.dumps(d))
    with pytest.raises(CheckpointError):
        load_checkpoint(p)


def test_predict_single_step_repeatable():
    m = _toy()
    for k in m.params:
        m.params[k][...] = 0.0
    m.params["b_out"][:] = [1.0, 2.0]
    w = np.random.default_rng(0).normal(size=(5, 4))
    m4 = RnnModel.init(4, [3], 2, seed=1)
    assert predict_single_step(m4, w).tolist() == predict_single_step(m4, w).tolist()
    m4.params = {k: np.zeros_like(v) for k, v in m4.params.items()}
    m4.params["b_out"][:] = [1.0, 2.0]
    assert predict_single_step(m4, w).tolist() == [1.0, 2.0]


def test_rollout_repeatable_and_empty():
    m, _ = train(_series(), [6, 5], TrainConfig(epochs=15, batch_len=10))
    d = _series()
    mh, lh = d.select(["h_bar", "alpha"]).samples, d.select(["C_L", "C_M"]).samples
    a = predict_rollout(m, mh[:20], lh[:20], mh[20:60])
    b = predict_rollout(m, mh[:20], lh[:20], mh[20:60])
    assert a.shape == (40, 2) and np.all(np.isfinite(a))
    np.testing.assert_array_equal(a, b)
    assert predict_rollout(m, mh[:20], lh[:20], np.zeros((0, 2))).shape == (0, 2)
    with pytest.raises(ValueError):
        predict_rollout(m, mh[:20], lh[:19], mh[20:30])


def test_rollout_tracks_periodic_signal():
    d = _series(n=601)
    m, hist = train(d, [30, 20], TrainConfig(epochs=1500, batch_len=20, learning_rate=3e-3))
    mh, lh = d.select(["h_bar", "alpha"]).samples, d.select(["C_L", "C_M"]).samples
    pred = predict_rollout(m, mh[:200], lh[:200], mh[200:400])
    err = pred - lh[200:400]
    span = lh.max(axis=0) - lh.min(axis=0)
    assert np.all(np.isfinite(pred))
    assert np.all(np.sqrt(np.mean(err ** 2, axis=0)) / span < 0.05)
