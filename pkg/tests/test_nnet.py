import numpy as np
import pytest

from fedhe import hecore, nnet
from fedhe.errors import ConfigError, DataError, UnsupportedConfigurationError
from fedhe.nnet import MlpSpec, TrainConfig, Weights

LINEAR_1 = MlpSpec((1, 1), "relu", "linear", "mse")


def _single(w, b):
    return Weights([(np.array([[w]]), np.array([b]))])


def test_init_is_deterministic_glorot_with_zero_biases():
    spec = MlpSpec.classifier(20)
    a, b = nnet.init_weights(spec, 4), nnet.init_weights(spec, 4)
    assert a.equal(b)
    assert not a.equal(nnet.init_weights(spec, 5))
    for w, bias in a.layers:
        fan_in, fan_out = w.shape
        assert np.all(np.abs(w) <= np.sqrt(6 / (fan_in + fan_out)))
        assert np.all(bias == 0)


def test_default_topologies():
    assert MlpSpec.classifier(10).layer_sizes == (10, 64, 32, 16, 1)
    r = MlpSpec.regressor(10)
    assert r.layer_sizes == (10,) + (100,) * 5 + (1,)
    assert (r.hidden_activation, r.output_activation, r.loss) == ("tanh", "linear", "mse")
    assert MlpSpec.federated_regressor(7).layer_sizes == (7,) + (40,) * 10 + (1,)


@pytest.mark.parametrize("kwargs", [
    dict(layer_sizes=(3,)),
    dict(layer_sizes=(3, 0, 1)),
    dict(layer_sizes=(3, 1), hidden_activation="gelu"),
    dict(layer_sizes=(3, 1), loss="hinge"),
])
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        MlpSpec(**kwargs)


def test_zero_weights_sigmoid_predicts_one_half():
    spec = MlpSpec((4, 3, 1))
    zeros = Weights.from_arrays(np.zeros(s) for s in nnet.init_weights(spec, 0).shapes)
    out = nnet.forward(spec, zeros, np.random.default_rng(0).normal(size=(5, 4)))
    assert np.all(out == 0.5)


def test_identity_like_linear_net():
    assert nnet.forward(LINEAR_1, _single(2.0, 1.0), np.array([[3.0]]))[0, 0] == 7.0


def test_forward_shape_mismatch():
    with pytest.raises(DataError):
        nnet.forward(LINEAR_1, _single(1.0, 0.0), np.zeros((2, 3)))


def test_one_sgd_step_hand_gradient():
    # grad_w = 2(yhat - y) x = -4 and grad_b = -4, so one step of lr 0.1 gives 0.4 each
    cfg = TrainConfig(learning_rate=0.1, batch_size=1, epochs=1)
    w, _ = nnet.train(LINEAR_1, (np.array([[1.0]]), np.array([2.0])), cfg, init=_single(0.0, 0.0))
    assert w.layers[0][0][0, 0] == pytest.approx(0.4, abs=1e-15)
    assert w.layers[0][1][0] == pytest.approx(0.4, abs=1e-15)


def test_zero_epochs_leaves_weights_unchanged(toy_classification):
    spec = MlpSpec.classifier(6, (8,))
    init = nnet.init_weights(spec, 0)
    w, hist = nnet.train(spec, toy_classification, TrainConfig(epochs=0), init=init)
    assert w.equal(init) and hist == []


def test_training_is_deterministic_and_reduces_loss(toy_classification):
    spec = MlpSpec.classifier(6, (16, 8))
    cfg = TrainConfig(epochs=40, seed=3)
    a, hist = nnet.train(spec, toy_classification, cfg)
    b, _ = nnet.train(spec, toy_classification, cfg)
    assert a.equal(b)
    assert hist[-1] < hist[0]


def test_adam_trains_plaintext(toy_regression):
    spec = MlpSpec.regressor(5, (16,))
    _, hist = nnet.train(spec, toy_regression, TrainConfig(epochs=30, optimizer="adam", learning_rate=0.01))
    assert hist[-1] < hist[0]


def test_adam_on_ciphertexts_is_unsupported(key, rng, toy_classification):
    x, y = toy_classification
    spec = MlpSpec.classifier(6, (4,))
    with pytest.raises(UnsupportedConfigurationError):
        nnet.train_encrypted(spec, x[:10], y[:10], TrainConfig(epochs=1, optimizer="adam"), key, rng)


def test_gradient_check_random_three_layer_net(rng):
    spec = MlpSpec((4, 5, 3, 1), "tanh", "sigmoid", "cross_entropy")
    x = rng.normal(size=(7, 4))
    y = (rng.random(7) > 0.5).astype(float)
    assert nnet.grad_check(spec, nnet.init_weights(spec, 1), x, y, 1e-5) < 1e-4


def test_single_weight_gradient_matches_analytic():
    x, y = np.array([[1.5]]), np.array([0.25])
    w = _single(0.8, -0.1)
    g = nnet.gradients(LINEAR_1, w, x, y)
    resid = 0.8 * 1.5 - 0.1 - 0.25
    assert g.layers[0][0][0, 0] == pytest.approx(2 * resid * 1.5, abs=1e-9)
    assert g.layers[0][1][0] == pytest.approx(2 * resid, abs=1e-9)


def test_zero_loss_batch_has_zero_gradient():
    x = np.array([[0.0], [1.0], [2.0]])
    y = 2.0 * x[:, 0] + 1.0
    g = nnet.gradients(LINEAR_1, _single(2.0, 1.0), x, y)
    assert np.max(np.abs(g.flat())) <= 1e-12


def test_encrypted_forward_matches_plaintext(key, rng):
    spec = MlpSpec.classifier(5, (6, 4))
    w = nnet.init_weights(spec, 2)
    x = rng.normal(size=(9, 5))
    enc = nnet.forward(spec, nnet.encrypt_weights(w, key, rng), hecore.encrypt_array(key, x, rng))
    assert np.max(np.abs(hecore.decrypt_array(key, enc) - nnet.forward(spec, w, x))) < 1e-8


def test_encrypted_training_matches_plaintext_tanh_regressor(key, toy_regression):
    x, y = toy_regression
    x, y = x[:60], y[:60]
    spec = MlpSpec.regressor(5, (8, 8))
    cfg = TrainConfig(epochs=15, batch_size=16, seed=1)
    plain, _ = nnet.train(spec, (x, y), cfg)
    enc, hist = nnet.train_encrypted(spec, x, y, cfg, key, np.random.default_rng(9))
    assert np.max(np.abs(nnet.decrypt_weights(enc, key).flat() - plain.flat())) < 1e-9
    assert hist.shape == (15,)


def test_encrypted_and_plaintext_data_cannot_mix(key, rng, toy_classification):
    x, y = toy_classification
    spec = MlpSpec.classifier(6, (4,))
    enc_w = nnet.encrypt_weights(nnet.init_weights(spec, 0), key, rng)
    with pytest.raises(DataError):
        nnet.train(spec, (x, y), TrainConfig(epochs=1), init=enc_w)


def test_weights_text_and_binary_round_trip():
    w = nnet.init_weights(MlpSpec.classifier(3, (4, 2)), 0)
    assert Weights.from_text(w.to_text()).equal(w)
    assert Weights.from_bytes(w.to_bytes()).equal(w)
    assert Weights.from_flat(w.shapes, w.flat()).equal(w)


def test_weights_check_rejects_wrong_shapes():
    w = nnet.init_weights(MlpSpec.classifier(3, (4,)), 0)
    with pytest.raises(DataError):
        w.check(MlpSpec.classifier(5, (4,)))


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)
    with pytest.raises(ConfigError):
        TrainConfig(optimizer="rmsprop")
