import numpy as np
import pytest

from orthofd.numerics import (AdamState, Layer, NonFiniteError, ShapeError, adam_step,
                              finite_difference_gradient, gradient_relative_error, init_layers,
                              net_backward, net_forward)


def random_net(widths, seed, final="identity"):
    rng = np.random.default_rng(seed)
    layers = init_layers(widths, rng, final_activation=final)
    for layer in layers:
        layer.weights[...] = rng.uniform(-1, 1, layer.weights.shape)
        layer.bias[...] = rng.uniform(-1, 1, layer.bias.shape)
    return layers


def blocks_of(layers):
    out = {}
    for k, layer in enumerate(layers):
        out[f"{k}.w"] = layer.weights
        out[f"{k}.b"] = layer.bias
    return out


def test_zero_weights_give_activation_of_bias():
    b = np.array([0.3, -2.0])
    layer = Layer(np.zeros((2, 4)), b, "tanh")
    out, _ = net_forward([layer], np.arange(4.0))
    np.testing.assert_array_equal(out, np.tanh(b))


def test_identity_layer_passes_input_through():
    x = np.array([1.5, -0.25, 3.0])
    out, _ = net_forward([Layer(np.eye(3), np.zeros(3), "identity")], x)
    np.testing.assert_array_equal(out, x)


def test_default_shared_shape():
    layers = init_layers((16, 100, 50), np.random.default_rng(0))
    out, trace = net_forward(layers, np.ones(16))
    assert out.shape == (50,)
    assert len(trace.activations) == len(layers) + 1


def test_shape_error_names_layer():
    layers = init_layers((4, 3, 2), np.random.default_rng(0))
    layers[1] = Layer(np.zeros((2, 5)), np.zeros(2))
    with pytest.raises(ShapeError, match="layer 1"):
        net_forward(layers, np.ones(4))


def test_tanh_bounded_identity_exact():
    layers = random_net((5, 7, 3), 1, final="tanh")
    x = np.random.default_rng(2).normal(scale=50, size=(20, 5))
    _, trace = net_forward(layers, x)
    for h in trace.activations[1:]:
        assert np.all(np.abs(h) <= 1.0)


def test_constant_net_has_zero_input_gradient():
    layers = [Layer(np.zeros((3, 4)), np.zeros(3), "identity")]
    _, trace = net_forward(layers, np.ones(4))
    _, gin = net_backward(layers, trace, np.ones(3))
    np.testing.assert_array_equal(gin, 0.0)


def test_linear_layer_gradients():
    rng = np.random.default_rng(3)
    w, b = rng.normal(size=(3, 4)), rng.normal(size=3)
    x, g = rng.normal(size=4), rng.normal(size=3)
    layers = [Layer(w, b, "identity")]
    _, trace = net_forward(layers, x)
    [(dW, db)], gin = net_backward(layers, trace, g)
    np.testing.assert_allclose(dW, np.outer(g, x))
    np.testing.assert_allclose(db, g)
    np.testing.assert_allclose(gin, w.T @ g)


def test_stale_trace_rejected():
    layers = random_net((4, 3, 2), 0)
    _, trace = net_forward(layers, np.ones(4))
    with pytest.raises(ShapeError):
        net_backward(layers[:1], trace, np.ones(3))


@pytest.mark.parametrize("widths", [(3, 2), (4, 6, 2), (5, 8, 7, 3), (2, 3, 3, 3, 2)])
@pytest.mark.parametrize("batch", [None, 6])
def test_backward_matches_finite_differences(widths, batch):
    layers = random_net(widths, seed=len(widths))
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, size=(widths[0],) if batch is None else (batch, widths[0]))
    c = rng.normal(size=(widths[-1],) if batch is None else (batch, widths[-1]))

    def loss():
        out, _ = net_forward(layers, x)
        return float(np.sum(c * out))

    out, trace = net_forward(layers, x)
    grads, gin = net_backward(layers, trace, c)
    analytic = {}
    for k, (dW, db) in enumerate(grads):
        analytic[f"{k}.w"], analytic[f"{k}.b"] = dW, db
    fd = finite_difference_gradient(loss, blocks_of(layers), 1e-5)
    assert gradient_relative_error(analytic, fd) < 1e-4
    fd_in = finite_difference_gradient(loss, {"x": x}, 1e-5)["x"]
    assert gradient_relative_error({"x": gin}, {"x": fd_in}) < 1e-4


def test_finite_difference_quadratic_and_constant():
    p = {"a": np.array([0.5, -1.5, 2.0])}
    g = finite_difference_gradient(lambda: 0.5 * float(np.sum(p["a"] ** 2)), p, 1e-5)["a"]
    np.testing.assert_allclose(g, p["a"], atol=1e-9)
    g0 = finite_difference_gradient(lambda: 3.0, p, 1e-5)["a"]
    np.testing.assert_array_equal(g0, 0.0)
    # parameters restored after probing
    np.testing.assert_array_equal(p["a"], [0.5, -1.5, 2.0])


def test_adam_zero_gradient_is_fixed_point():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    before = params["w"].copy()
    state = AdamState()
    for _ in range(3):
        adam_step(state, params, {"w": np.zeros(3)})
    np.testing.assert_array_equal(params["w"], before)
    assert state.step == 3


def test_adam_first_step_has_magnitude_lr():
    g = 0.37
    params = {"w": np.array([0.0])}
    state = AdamState(learning_rate=1e-3)
    adam_step(state, params, {"w": np.array([g])})
    # m_hat = g, v_hat = g^2
    expected = 1e-3 * g / (abs(g) + 1e-8)
    np.testing.assert_allclose(-params["w"][0], expected, rtol=1e-12)


def test_adam_two_steps_constant_gradient():
    g, lr, b1, b2, eps = 2.5, 1e-3, 0.9, 0.999, 1e-8
    # closed form of the two-step recurrence
    m1, v1 = (1 - b1) * g, (1 - b2) * g * g
    u1 = lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
    m2, v2 = b1 * m1 + (1 - b1) * g, b2 * v1 + (1 - b2) * g * g
    u2 = lr * (m2 / (1 - b1**2)) / (np.sqrt(v2 / (1 - b2**2)) + eps)

    params = {"w": np.array([1.0])}
    state = AdamState(learning_rate=lr)
    adam_step(state, params, {"w": np.array([g])})
    step1 = 1.0 - params["w"][0]
    before = params["w"][0]
    adam_step(state, params, {"w": np.array([g])})
    step2 = before - params["w"][0]
    np.testing.assert_allclose([step1, step2], [u1, u2], rtol=1e-12)
    assert step2 <= step1 + 1e-12


def test_adam_rejects_nonfinite_gradient():
    params = {"w": np.zeros(2), "b": np.zeros(1)}
    with pytest.raises(NonFiniteError, match="'b'"):
        adam_step(AdamState(), params, {"w": np.zeros(2), "b": np.array([np.nan])})


def test_forward_is_deterministic():
    layers = random_net((6, 8, 4), 5)
    x = np.random.default_rng(0).normal(size=(10, 6))
    a, _ = net_forward(layers, x)
    b, _ = net_forward(layers, x)
    assert a.tobytes() == b.tobytes()
