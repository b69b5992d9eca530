import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tddcsi.errors import FormatError, TrainingDiverged
from tddcsi.neuralcore import (Adam, MlpModel, MlpSpec, OptimizerState, Sgd, TrainConfig, backprop, forward,
                               gradient_relative_error, init_model, load_model, loss_cross_entropy, loss_mse,
                               model_from_bytes, model_to_bytes, numerical_gradient, save_model, train,
                               train_step)


def _one_hot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1
    return out


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((3, 2), ("tanh", "linear"))
    with pytest.raises(ValueError):
        MlpSpec((3, 4, 2), ("softmax", "linear"))
    with pytest.raises(ValueError):
        MlpSpec((3, 2), ("relu",))
    assert MlpSpec((22, 512, 128, 512), ("tanh", "tanh", "linear")).n_params == 22 * 512 + 512 + 512 * 128 + 128 + 128 * 512 + 512


def test_init_is_glorot_uniform():
    spec = MlpSpec((300, 200, 10), ("tanh", "linear"))
    model = init_model(spec, np.random.default_rng(0))
    assert model.dtype == np.float32
    for w, b in zip(model.weights, model.biases):
        limit = np.sqrt(6 / (w.shape[0] + w.shape[1]))
        assert np.max(np.abs(w)) <= limit
        assert np.var(w) == pytest.approx(limit**2 / 3, rel=0.05)
        assert not b.any()


def test_forward_examples():
    spec = MlpSpec((4, 3), ("linear",))
    zero = MlpModel(spec, np.zeros(spec.n_params, dtype=np.float32))
    np.testing.assert_array_equal(forward(zero, np.ones((2, 4))), 0)
    soft = MlpModel(MlpSpec((4, 5), ("softmax",)), np.zeros(25, dtype=np.float32))
    np.testing.assert_allclose(forward(soft, np.ones(4)), [0.2] * 5, rtol=1e-6)
    one = MlpModel.from_arrays(MlpSpec((1, 1), ("tanh",)), [np.array([[2.0]])], [np.array([1.0])], np.float64)
    assert forward(one, np.array([0.5]))[0] == pytest.approx(np.tanh(2.0), rel=1e-12)
    assert forward(one, np.array([0.5]))[0] == pytest.approx(0.96403, abs=1e-5)
    with pytest.raises(ValueError):
        forward(one, np.ones(2))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 6), elements=st.floats(-1e4, 1e4)))
def test_softmax_is_a_distribution(x):
    spec = MlpSpec((6, 5), ("softmax",))
    model = init_model(spec, np.random.default_rng(1), dtype=np.float64)
    p = forward(model, x)
    assert np.all(p >= 0) and np.all(p <= 1)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_cross_entropy_examples():
    assert loss_cross_entropy(np.full((1, 5), 0.2), _one_hot([2], 5)) == pytest.approx(np.log(5), rel=1e-12)
    assert loss_cross_entropy(np.array([[0.0, 1.0]]), _one_hot([1], 2)) == 0.0
    assert loss_cross_entropy(np.array([[1.0, 0.0]]), _one_hot([1], 2)) == pytest.approx(27.631, abs=1e-3)


def test_mse_examples():
    assert loss_mse(np.ones(3), np.ones(3)) == 0.0
    assert loss_mse(np.array([1.0, 1.0]), np.zeros(2)) == 1.0
    a, b = np.array([0.5, -1.0, 2.0]), np.array([0.0, 1.0, 1.0])
    assert loss_mse(3 * a, 3 * b) == pytest.approx(9 * loss_mse(a, b), rel=1e-12)
    with pytest.raises(ValueError):
        loss_mse(np.ones(2), np.ones(3))


NET_SHAPES = [
    ((4, 3, 2), ("tanh", "linear"), "mse"),
    ((4, 3, 3, 2), ("sigmoid", "tanh", "softmax"), "cross_entropy"),
    ((4, 3, 3, 2), ("tanh", "sigmoid", "softmax"), "mse"),
    ((4, 3, 2), ("sigmoid", "sigmoid"), "mse"),
    ((4, 3, 2), ("linear", "tanh"), "mse"),
]


@pytest.mark.parametrize("i", range(20))
def test_gradient_matches_finite_differences(i):
    dims, acts, loss = NET_SHAPES[i % len(NET_SHAPES)]
    rng = np.random.default_rng(100 + i)
    model = init_model(MlpSpec(dims, acts), rng, dtype=np.float64)
    model.flat[...] = rng.standard_normal(model.flat.size)  # nonzero biases too
    x = rng.standard_normal((5, dims[0]))
    if loss == "cross_entropy" or acts[-1] == "softmax":
        y = _one_hot(rng.integers(0, dims[-1], 5), dims[-1])
    else:
        y = rng.standard_normal((5, dims[-1]))
    _, grad = backprop(model, x, y, loss)
    num = numerical_gradient(model, x, y, loss, eps=1e-4)
    assert gradient_relative_error(grad, num) < 1e-4


def test_zero_learning_rate_keeps_parameters():
    rng = np.random.default_rng(2)
    model = init_model(MlpSpec((4, 3, 2), ("tanh", "linear")), rng)
    before = model.copy()
    x, y = rng.standard_normal((8, 4)).astype(np.float32), rng.standard_normal((8, 2)).astype(np.float32)
    for opt in (Sgd(0.0), Adam(0.0)):
        state = OptimizerState.for_model(opt, model)
        train_step(model, x, y, state)
        assert model == before


def test_sgd_scalar_step():
    model = MlpModel.from_arrays(MlpSpec((1, 1), ("linear",)), [np.array([[1.0]])], [np.array([0.0])], np.float64)
    model.biases[0][...] = 0.0
    state = OptimizerState.for_model(Sgd(0.1), model)
    # dL/dw = 2*(w*x + b - t)*x = 2
    train_step(model, np.array([[1.0]]), np.array([[0.0]]), state)
    assert model.weights[0][0, 0] == pytest.approx(0.8, rel=1e-12)


def test_adam_first_step_size():
    # Adam's first bias-corrected step moves each parameter by ~lr in the gradient's sign direction
    model = MlpModel.from_arrays(MlpSpec((1, 1), ("linear",)), [np.array([[1.0]])], [np.array([0.5])], np.float64)
    state = OptimizerState.for_model(Adam(0.01), model)
    train_step(model, np.array([[1.0]]), np.array([[0.0]]), state)
    assert model.weights[0][0, 0] == pytest.approx(0.99, abs=1e-7)
    assert model.biases[0][0] == pytest.approx(0.49, abs=1e-7)


def test_non_finite_loss_aborts():
    model = init_model(MlpSpec((2, 2), ("linear",)), np.random.default_rng(0), dtype=np.float64)
    state = OptimizerState.for_model(Adam(), model)
    with pytest.raises(TrainingDiverged):
        train_step(model, np.array([[np.nan, 1.0]]), np.zeros((1, 2)), state)


def test_divergence_carries_log():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((200, 2)).astype(np.float32) * 1e3
    y = (x @ np.ones((2, 1)) * 1e30).astype(np.float32)
    with pytest.raises(TrainingDiverged) as info, np.errstate(all="ignore"):
        train(MlpSpec((2, 1), ("linear",)), x, y, TrainConfig(learning_rate=1e30, optimizer="sgd", max_epochs=5))
    assert isinstance(info.value.log, list)


def test_separable_toy_set_reaches_full_accuracy():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((400, 2)).astype(np.float32)
    x[:, 0] += np.where(rng.random(400) < 0.5, 2.0, -2.0)
    labels = (x[:, 0] > 0).astype(int)
    y = _one_hot(labels, 2).astype(np.float32)
    _, log = train(MlpSpec((2, 8, 2), ("tanh", "softmax")), x, y,
                   TrainConfig(learning_rate=0.01, max_epochs=50, early_stop_patience=50, seed=1))
    assert max(e["val_accuracy"] for e in log) == 1.0


def test_constant_targets_fit():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((500, 3)).astype(np.float32)
    y = np.full((500, 2), 0.75, dtype=np.float32)
    _, log = train(MlpSpec((3, 2), ("linear",)), x, y,
                   TrainConfig(learning_rate=0.05, optimizer="sgd", max_epochs=100, early_stop_patience=20, seed=2))
    assert min(e["val_loss"] for e in log) < 1e-6


def _toy_regression(seed=5, n=300):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 4)).astype(np.float32)
    y = np.tanh(x @ rng.standard_normal((4, 3))).astype(np.float32)
    return x, y


def test_training_is_deterministic_and_order_invariant():
    x, y = _toy_regression()
    spec = MlpSpec((4, 6, 3), ("tanh", "linear"))
    cfg = TrainConfig(max_epochs=5, seed=9)
    a, log_a = train(spec, x, y, cfg)
    b, log_b = train(spec, x, y, cfg)
    assert a == b and log_a == log_b
    perm = np.random.default_rng(1).permutation(len(x))
    c, log_c = train(spec, x[perm], y[perm], cfg)
    assert a == c and log_a == log_c
    d, _ = train(spec, x, y, TrainConfig(max_epochs=5, seed=10))
    assert a != d


def test_train_returns_best_epoch():
    x, y = _toy_regression(6)
    spec = MlpSpec((4, 6, 3), ("tanh", "linear"))
    xv, yv = _toy_regression(7, 100)
    model, log = train(spec, x, y, TrainConfig(max_epochs=30, learning_rate=0.05, seed=1), validation=(xv, yv))
    best = min(e["val_loss"] for e in log)
    assert loss_mse(forward(model, xv).astype(np.float64), yv) == pytest.approx(best, rel=1e-6)


def test_train_rejects_bad_data():
    spec = MlpSpec((4, 3), ("linear",))
    with pytest.raises(ValueError):
        train(spec, np.zeros((0, 4)), np.zeros((0, 3)))
    with pytest.raises(ValueError):
        train(spec, np.zeros((10, 5)), np.zeros((10, 3)))
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0.0)


def _model():
    return init_model(MlpSpec((22, 7, 5, 3), ("tanh", "sigmoid", "softmax")), np.random.default_rng(11))


def test_model_round_trip(tmp_path):
    model = _model()
    path = tmp_path / "m.mdl"
    save_model(model, path)
    assert load_model(path) == model


def test_model_file_layout():
    model = _model()
    raw = model_to_bytes(model)
    assert raw[:4] == b"TDDN"
    assert struct.unpack_from("<HH", raw, 4) == (1, 3)
    assert struct.unpack_from("<IIB", raw, 8) == (22, 7, 1)
    pos = 8 + 9 * 3
    w0 = np.frombuffer(raw, dtype="<f4", count=7 * 22, offset=pos).reshape(7, 22)
    np.testing.assert_array_equal(w0, model.weights[0])
    assert struct.unpack("<I", raw[-4:])[0] == zlib.crc32(raw[:-4])


def test_model_file_errors():
    raw = model_to_bytes(_model())
    with pytest.raises(FormatError, match="truncated"):
        model_from_bytes(raw[:-10])
    with pytest.raises(FormatError, match="truncated"):
        model_from_bytes(raw[:6])
    with pytest.raises(FormatError, match="version"):
        model_from_bytes(raw[:4] + struct.pack("<H", 2) + raw[6:])
    with pytest.raises(FormatError, match="magic"):
        model_from_bytes(b"XXXX" + raw[4:])
    flipped = bytearray(raw)
    flipped[60] ^= 0xFF
    with pytest.raises(FormatError, match="CRC"):
        model_from_bytes(bytes(flipped))
