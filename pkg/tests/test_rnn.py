import math

import numpy as np
import pytest

from core.errors import ContractError, DomainError, ShapeError
from core.ndcore import SeededRng
from networks.rnn import (DenseLayer, GruParams, LstmParams, StreamNetwork, cell_parameter_count,
                          grad_check, gru_step, lstm_step, predict, stream_backward,
                          stream_forward)


def _scalar_sigmoid(a):
    return 1.0 / (1.0 + math.exp(-a))


def _scalar_affine(W, U, b, x, h, j):
    total = b[j]
    for k in range(len(x)):
        total += W[j, k] * x[k]
    for k in range(len(h)):
        total += U[j, k] * h[k]
    return total


def test_gru_zero_parameters_halve_the_state():
    v = np.array([0.4, -1.0, 2.0])
    h, _ = gru_step(GruParams.zeros(2, 3), np.array([3.0, -4.0]), v)
    np.testing.assert_allclose(h, 0.5 * v)
    h0, _ = gru_step(GruParams.zeros(2, 3), np.array([3.0, -4.0]), np.zeros(3))
    np.testing.assert_array_equal(h0, np.zeros(3))


def test_lstm_zero_parameters():
    v = np.array([0.4, -1.0, 2.0])
    (h, c), _ = lstm_step(LstmParams.zeros(2, 3), np.array([3.0, -4.0]), (np.zeros(3), v))
    np.testing.assert_allclose(c, 0.5 * v)
    np.testing.assert_allclose(h, 0.5 * np.tanh(0.5 * v))


def test_gru_step_matches_scalar_loop():
    rng = SeededRng(1)
    p = GruParams.init(rng, 3, 4)
    x, h = rng.normal(3), rng.normal(4)
    got, _ = gru_step(p, x, h)
    for j in range(4):
        z = _scalar_sigmoid(_scalar_affine(p.W_z, p.U_z, p.b_z, x, h, j))
        r = [_scalar_sigmoid(_scalar_affine(p.W_r, p.U_r, p.b_r, x, h, i)) for i in range(4)]
        rh = [r[i] * h[i] for i in range(4)]
        h_tilde = math.tanh(_scalar_affine(p.W_h, p.U_h, p.b_h, x, rh, j))
        assert abs(got[j] - ((1 - z) * h[j] + z * h_tilde)) < 1e-12


def test_lstm_step_matches_scalar_loop():
    rng = SeededRng(2)
    p = LstmParams.init(rng, 3, 4)
    x, h, c = rng.normal(3), rng.normal(4), rng.normal(4)
    (got_h, got_c), _ = lstm_step(p, x, (h, c))
    for j in range(4):
        f = _scalar_sigmoid(_scalar_affine(p.W_f, p.U_f, p.b_f, x, h, j))
        i = _scalar_sigmoid(_scalar_affine(p.W_i, p.U_i, p.b_i, x, h, j))
        o = _scalar_sigmoid(_scalar_affine(p.W_o, p.U_o, p.b_o, x, h, j))
        g = math.tanh(_scalar_affine(p.W_g, p.U_g, p.b_g, x, h, j))
        c_new = f * c[j] + i * g
        assert abs(got_c[j] - c_new) < 1e-12
        assert abs(got_h[j] - o * math.tanh(c_new)) < 1e-12


def test_gru_state_stays_in_unit_box():
    rng = SeededRng(5)
    p = GruParams.init(rng, 4, 6)
    h = rng.uniform(6, -1.0, 1.0)
    for _ in range(50):
        h, _ = gru_step(p, rng.normal(4, scale=10.0), h)
        assert np.all(np.abs(h) <= 1.0)


def test_zero_cell_passes_head_bias_through():
    net = StreamNetwork("gru", GruParams.zeros(4, 3), (DenseLayer(np.zeros((1, 3)), np.array([0.7])),))
    pred, _ = stream_forward(net, SeededRng(0).normal((6, 4)))
    assert pred == pytest.approx(0.7, abs=1e-15)


def test_stream_forward_is_step_composition():
    rng = SeededRng(9)
    net = StreamNetwork.init("gru", 4, 5, rng.substream(0), head_units=3)
    window = rng.normal((3, 4))
    h = np.zeros(5)
    for t in range(3):
        h, _ = gru_step(net.cell, window[t], h)
    u = np.tanh(net.head[0].W @ h + net.head[0].b)
    expected = (net.head[1].W @ u + net.head[1].b).item()
    pred, _ = stream_forward(net, window)
    assert abs(pred - expected) < 1e-12


def test_batch_matches_single_windows():
    rng = SeededRng(4)
    net = StreamNetwork.init("lstm", 5, 3, rng.substream(0))
    windows = rng.normal((6, 4, 5))
    batch = predict(net, windows)
    singles = [stream_forward(net, win)[0] for win in windows]
    np.testing.assert_allclose(batch, singles, rtol=0, atol=1e-12)


def test_forward_is_deterministic():
    net = StreamNetwork.init("gru", 4, 3, SeededRng(0))
    window = SeededRng(1).normal((5, 4))
    assert stream_forward(net, window)[0] == stream_forward(net, window)[0]


def test_window_width_mismatch():
    net = StreamNetwork.init("gru", 4, 3, SeededRng(0))
    with pytest.raises(ShapeError):
        stream_forward(net, np.zeros((5, 5)))


def test_zero_upstream_gives_zero_gradients():
    net = StreamNetwork.init("lstm", 4, 3, SeededRng(0))
    _, cache = stream_forward(net, SeededRng(1).normal((5, 4)))
    grads = stream_backward(net, cache, 0.0)
    assert all(not np.any(g) for g in grads.values())
    assert set(grads) == set(net.tensors())


def test_stale_cache_is_rejected():
    net = StreamNetwork.init("gru", 4, 3, SeededRng(0))
    _, cache = stream_forward(net, SeededRng(1).normal((5, 4)))
    with pytest.raises(ContractError):
        stream_backward(net.with_tensors({}), cache, 1.0)


@pytest.mark.parametrize("cell,dim", [("gru", 4), ("lstm", 5)])
@pytest.mark.parametrize("seed", range(10))
def test_bptt_matches_finite_differences(cell, dim, seed):
    rng = SeededRng(seed)
    net = StreamNetwork.init(cell, dim, 3, rng.substream(0), head_units=4)
    window = rng.substream(1).normal((5, dim))
    assert grad_check(net, window) < 1e-4


def test_grad_check_with_unused_parameters():
    net = StreamNetwork.init("gru", 4, 3, SeededRng(2), head_units=4)
    net = net.with_tensors({"head.1.W": np.zeros((1, 4))})
    _, cache = stream_forward(net, SeededRng(3).normal((5, 4)))
    grads = stream_backward(net, cache, 1.0)
    assert not np.any(grads["W_z"]) and not np.any(grads["head.0.W"])
    error = grad_check(net, SeededRng(3).normal((5, 4)))
    assert np.isfinite(error) and error < 1e-4


def test_grad_check_eps_range():
    net = StreamNetwork.init("gru", 4, 3, SeededRng(0))
    with pytest.raises(DomainError):
        grad_check(net, np.zeros((2, 4)), eps=1e-2)


def test_parameter_counts():
    assert cell_parameter_count("gru", 4, 32) == 3 * (32 * 4 + 32 * 32 + 32)
    assert cell_parameter_count("lstm", 4, 32) == 4 * (32 * 4 + 32 * 32 + 32)
    gru = StreamNetwork.init("gru", 4, 32, SeededRng(0), head_units=16)
    lstm = StreamNetwork.init("lstm", 4, 32, SeededRng(0), head_units=16)
    assert gru.parameter_count() < lstm.parameter_count()
    assert gru.parameter_count() == cell_parameter_count("gru", 4, 32) + 16 * 32 + 16 + 16 + 1
    assert gru.describe() == {"cell": "gru", "input_dim": 4, "hidden_dim": 32,
                              "head_units": 16, "head_layers": 1}


def test_unknown_cell_type():
    with pytest.raises(DomainError):
        StreamNetwork.init("rnn", 4, 3, SeededRng(0))


def test_with_tensors_copies_its_inputs():
    net = StreamNetwork.init("gru", 4, 3, SeededRng(5), head_units=4)
    window = SeededRng(6).normal((5, 4))
    bias = net.tensors()["head.1.b"].copy()
    bias += 1.0
    shifted = net.with_tensors({"head.1.b": bias})
    bias -= 1.0
    base = stream_forward(net, window)[0]
    assert stream_forward(shifted, window)[0] == pytest.approx(base + 1.0, abs=1e-12)


def test_grad_check_flags_wrong_gradients(monkeypatch):
    net = StreamNetwork.init("lstm", 5, 3, SeededRng(8), head_units=4)
    window = SeededRng(9).normal((5, 5))
    right = stream_backward(net, stream_forward(net, window)[1], 1.0)
    assert grad_check(net, window) < 1e-4
    halved = {name: g / 2 for name, g in right.items()}
    monkeypatch.setattr("networks.rnn.stream_backward", lambda *args, **kwargs: halved)
    assert 0.4 < grad_check(net, window) < 0.6
