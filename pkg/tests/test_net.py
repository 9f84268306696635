import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mann.errors import InputShapeError, NumericError, TrainingDivergedError
from mann.losses import LossKind
from mann.net import (
    SGD, Activation, Adam, EpochStopRule, Network, OptimizerConfig, fit_network,
    init_weights,
)

import oracles


def affine(weight, bias, output=Activation.IDENTITY):
    return Network([1, 1], [np.array([[weight]], float)], [np.array([bias], float)],
                   output_activation=output)


def zero_net(sizes):
    return Network(sizes, [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(o) for o in sizes[1:]])


# -- forward --------------------------------------------------------------------

def test_forward_zero_parameters_gives_zero():
    net = zero_net([3, 4, 1])
    assert net.forward(np.array([1.0, -2.0, 5.0])) == 0.0


def test_forward_affine_single_layer():
    assert affine(2.0, 1.0).forward(np.array([3.0])) == 7.0


def test_forward_sigmoid_output_at_zero():
    net = affine(0.0, 0.0, output=Activation.SIGMOID)
    assert net.forward(np.array([5.0])) == 0.5


def test_forward_rejects_wrong_dimension():
    net = init_weights([2, 8, 1], seed=0)
    with pytest.raises(InputShapeError):
        net.forward(np.array([1.0, 2.0, 3.0]))
    with pytest.raises(InputShapeError):
        net.predict(np.ones((4, 3)))


def test_forward_matches_loop_oracle():
    rng = np.random.default_rng(3)
    net = init_weights([3, 5, 4, 1], seed=11)
    for b in net.biases:
        b[:] = rng.normal(size=b.shape)
    for _ in range(20):
        x = rng.uniform(-2, 2, size=3)
        expected = oracles.loop_forward(net.weights, net.biases, x)
        assert net.forward(x) == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_sigmoid_range_and_identity_passthrough():
    z = np.array([-30.0, -1.0, 0.0, 2.5, 30.0])
    s = Activation.SIGMOID(z)
    assert np.all((s > 0) & (s < 1))
    assert np.array_equal(Activation.IDENTITY(z), z)


def test_non_finite_activation_raises_with_layer():
    net = affine(1.0, 0.0)
    net.weights[0][0, 0] = np.inf
    with pytest.raises(NumericError) as exc:
        net.forward(np.array([1.0]))
    assert exc.value.layer == 0


# -- backward --------------------------------------------------------------------

def test_backward_zero_net_zero_target():
    g = affine(0.0, 0.0).backward(np.array([1.0]), 0.0)
    assert g.weights[0][0, 0] == 0.0 and g.biases[0][0] == 0.0


def test_backward_unit_bias():
    g = affine(0.0, 1.0).backward(np.array([1.0]), 0.0)
    assert g.biases[0][0] == 1.0
    assert g.weights[0][0, 0] == 1.0


def _relative_error(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-7)


def test_backward_matches_finite_differences_2_8_1():
    rng = np.random.default_rng(0)
    net = init_weights([2, 8, 1], seed=5)
    net.biases[0][:] = rng.normal(size=8)
    x = rng.uniform(-1, 1, size=2)
    g = net.backward(x, 0.3)
    fw, fb = oracles.finite_difference_gradients(net.weights, net.biases, x, 0.3)
    analytic = np.concatenate([a.ravel() for a in g.weights + g.biases])
    numeric = np.concatenate([a.ravel() for a in fw + fb])
    assert np.all(_relative_error(analytic, numeric) <= 1e-4)


@settings(max_examples=25, deadline=None)
@given(
    hidden=st.lists(st.integers(1, 8), min_size=0, max_size=3),
    d=st.integers(1, 4),
    loss=st.sampled_from(["squared", "logloss"]),
    seed=st.integers(0, 2**31 - 1),
)
def test_backward_matches_finite_differences_random_shapes(hidden, d, loss, seed):
    rng = np.random.default_rng(seed)
    sizes = [d, *hidden, 1]
    net = init_weights(sizes, seed=seed)
    for b in net.biases:
        b[:] = rng.normal(scale=0.5, size=b.shape)
    x = rng.uniform(-1, 1, size=d)
    target = float(rng.integers(0, 2)) if loss == "logloss" else float(rng.normal())
    g = net.backward(x, target, LossKind(loss))
    fw, fb = oracles.finite_difference_gradients(net.weights, net.biases, x, target, loss)
    analytic = np.concatenate([a.ravel() for a in g.weights + g.biases])
    numeric = np.concatenate([a.ravel() for a in fw + fb])
    assert np.all(_relative_error(analytic, numeric) <= 1e-4)


def test_batch_gradient_is_mean_of_example_gradients():
    rng = np.random.default_rng(1)
    net = init_weights([3, 6, 6, 1], seed=2)
    x = rng.normal(size=(7, 3))
    t = rng.normal(size=7)
    batch, _ = net.gradients(x, t)
    singles = [net.backward(x[i], t[i]).flat() for i in range(7)]
    np.testing.assert_allclose(batch.flat(), np.mean(singles, axis=0), rtol=1e-12, atol=1e-15)


def test_gradient_shapes_mirror_parameters():
    net = init_weights([4, 8, 8, 8, 1], seed=0)
    g = net.backward(np.ones(4), 1.0)
    assert [w.shape for w in g.weights] == [w.shape for w in net.weights]
    assert [b.shape for b in g.biases] == [b.shape for b in net.biases]


# -- init ------------------------------------------------------------------------

def test_init_same_seed_is_bit_identical():
    a = init_weights([2, 8, 8, 8, 1], seed=42)
    b = init_weights([2, 8, 8, 8, 1], seed=42)
    assert all(np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


def test_init_different_seeds_differ():
    a = init_weights([2, 8, 8, 8, 1], seed=1)
    b = init_weights([2, 8, 8, 8, 1], seed=2)
    assert any(not np.array_equal(p, q) for p, q in zip(a.parameters(), b.parameters()))


def test_init_shapes_and_glorot_bounds():
    net = init_weights([2, 8, 8, 8, 1], seed=0)
    assert [w.shape for w in net.weights] == [(8, 2), (8, 8), (8, 8), (1, 8)]
    for w in net.weights:
        limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        assert np.all(np.abs(w) <= limit)
    assert all(np.all(b == 0.0) for b in net.biases)


def test_network_validates_shapes():
    with pytest.raises(InputShapeError):
        Network([2, 3], [np.zeros((3, 2))], [np.zeros(3)])  # last layer must be 1
    with pytest.raises(InputShapeError):
        Network([2, 1], [np.zeros((2, 1))], [np.zeros(1)])


# -- optimizers --------------------------------------------------------------------

def test_sgd_step():
    p = [np.array([1.0, 2.0])]
    SGD(0.5).step(p, [np.array([2.0, -2.0])])
    np.testing.assert_array_equal(p[0], [0.0, 3.0])


def test_adam_first_step_moves_by_step_size():
    # after bias correction the first update is step_size * g / (|g| + eps)
    p = [np.array([1.0, -1.0])]
    Adam(0.1).step(p, [np.array([3.0, -0.5])])
    np.testing.assert_allclose(p[0], [0.9, -0.9], rtol=1e-7)


@pytest.mark.parametrize("kwargs", [
    {"beta1": 1.0}, {"beta1": 0.0}, {"beta2": 1.0}, {"eps": 0.0}, {"step_size": -1.0},
])
def test_adam_rejects_bad_settings(kwargs):
    with pytest.raises(ValueError):
        OptimizerConfig("adam", **{"step_size": 0.01, **kwargs})


def test_adam_moments_mirror_parameter_shapes():
    net = init_weights([3, 4, 1], seed=0)
    opt = Adam(0.01)
    g, _ = net.gradients(np.ones((2, 3)), [0.0, 1.0])
    opt.step(net.parameters(), g.weights + g.biases)
    assert [m.shape for m in opt.m] == [p.shape for p in net.parameters()]
    assert [v.shape for v in opt.v] == [p.shape for p in net.parameters()]


# -- early stopping / fitting ----------------------------------------------------------

def test_stop_rule_fires_exactly_at_patience():
    rule = EpochStopRule(3)
    assert rule.update(1.0)
    for k in range(1, 4):
        assert not rule.update(2.0)
        assert rule.should_stop == (k >= 3)


def test_fit_constant_target():
    # the input-dependent part of the output decays slowly; 10k full-batch
    # epochs on 32 points take about a second
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(32, 2))
    t = np.full(32, 0.37)
    fit = fit_network(init_weights([2, 8, 1], seed=0), x, t, (x, t),
                      optimizer=OptimizerConfig("adam", 0.01), epoch_cap=10000,
                      stop=EpochStopRule(500))
    assert np.max(np.abs(fit.network.predict(x) - 0.37)) < 1e-3


def test_epoch_cap_one():
    x = np.linspace(-1, 1, 20)[:, None]
    fit = fit_network(init_weights([1, 4, 1], seed=0), x, x[:, 0], (x, x[:, 0]),
                      epoch_cap=1, stop=EpochStopRule(100))
    assert fit.epochs_used == 1


class Ascent:
    """Moves parameters uphill so the validation error worsens every epoch."""

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p += 0.5 * g


def test_worsening_validation_returns_first_epoch():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(30, 2))
    t = rng.normal(size=30)
    fit = fit_network(init_weights([2, 4, 1], seed=1), x, t, (x, t),
                      optimizer=Ascent(), epoch_cap=50, stop=EpochStopRule(3))
    hist = fit.val_history
    assert all(b > a for a, b in zip(hist, hist[1:]))
    assert fit.epochs_used <= 4
    assert fit.best_epoch == 1
    # the returned network reproduces the epoch-1 validation error
    err = np.mean(0.5 * (t - fit.network.predict(x)) ** 2)
    assert err == pytest.approx(hist[0], rel=1e-12)


def test_returned_snapshot_is_best_seen():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, size=(200, 2))
    t = np.sin(3 * x[:, 0]) + rng.normal(scale=0.3, size=200)
    xv, tv = x[:20], t[:20]
    fit = fit_network(init_weights([2, 8, 1], seed=4), x[20:], t[20:], (xv, tv),
                      optimizer=OptimizerConfig("adam", 0.2), epoch_cap=60,
                      stop=EpochStopRule(5), batch_size=16, seed=0)
    err = np.mean(0.5 * (tv - fit.network.predict(xv)) ** 2)
    assert err == pytest.approx(min(fit.val_history), rel=1e-12)
    assert err <= min(fit.val_history[:fit.best_epoch])


def test_fit_is_deterministic_and_does_not_mutate_input():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(50, 3))
    t = rng.normal(size=50)
    net = init_weights([3, 8, 1], seed=9)
    before = [p.copy() for p in net.parameters()]
    runs = [fit_network(net, x, t, (x[:5], t[:5]), epoch_cap=20, batch_size=8, seed=3)
            for _ in range(2)]
    for p, q in zip(runs[0].network.parameters(), runs[1].network.parameters()):
        assert np.array_equal(p, q)
    assert all(np.array_equal(p, q) for p, q in zip(before, net.parameters()))
    assert runs[0].network.is_finite()


def test_include_initial_never_worsens_validation():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(40, 2))
    t = rng.normal(size=40)
    net = init_weights([2, 4, 1], seed=0)
    start = np.mean(0.5 * (t - net.predict(x)) ** 2)
    fit = fit_network(net, x, t, (x, t), optimizer=Ascent(), epoch_cap=10,
                      stop=EpochStopRule(2), include_initial=True)
    assert fit.best_epoch == 0
    assert np.mean(0.5 * (t - fit.network.predict(x)) ** 2) == start


def test_divergence_is_reported():
    x = np.linspace(-1, 1, 20)[:, None]
    net = init_weights([1, 1], seed=0)
    with pytest.raises(TrainingDivergedError):
        fit_network(net, x, 50 * x[:, 0], (x, 50 * x[:, 0]),
                    optimizer=OptimizerConfig("sgd", 1e3), epoch_cap=50)


def test_fit_rejects_bad_arguments():
    x = np.ones((4, 1))
    net = init_weights([1, 1], seed=0)
    with pytest.raises(ValueError):
        fit_network(net, x, np.ones(4), (x, np.ones(4)), epoch_cap=0)
    with pytest.raises(ValueError):
        fit_network(net, x, np.ones(4), (np.ones((0, 1)), np.ones(0)))
