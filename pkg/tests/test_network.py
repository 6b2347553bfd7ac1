import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from neurocert import expr as ex
from neurocert.network import NetSpec, Network, close_loop


def _set(net, weights, biases=None):
    net.weights = [torch.tensor(w, dtype=torch.float64, requires_grad=True) for w in weights]
    if biases is not None:
        net.biases = [None if b is None else torch.tensor(b, dtype=torch.float64, requires_grad=True) for b in biases]


@pytest.fixture
def quadratic():
    net = Network(2, NetSpec((2,), ("poly2",)), 1)
    _set(net, [np.eye(2), [[1.0, 1.0]]], [[0.0, 0.0], [0.0]])
    return net


def _random_net(seed, acts=("tanh",), widths=(5,), out=1, **kw):
    return Network(2, NetSpec(widths, acts), out, generator=torch.Generator().manual_seed(seed), **kw)


def _with_random_biases(net, seed):
    g = np.random.default_rng(seed)
    net.biases = [None if b is None else torch.tensor(g.normal(size=b.shape), requires_grad=True) for b in net.biases]
    return net


def test_forward_quadratic(quadratic):
    assert quadratic.forward(np.array([3.0, 4.0]))[0] == 25.0


def test_forward_checks_dimension(quadratic):
    with pytest.raises(ValueError):
        quadratic.forward(np.zeros(3))


def test_symbolic_quadratic(quadratic):
    (e,) = quadratic.to_symbolic()
    assert ex.eval_expr(e, [3.0, 4.0]) == 25.0
    assert ex.pretty(e) == "x0^2 + x1^2"


def test_grad_input_quadratic(quadratic):
    assert np.allclose(quadratic.grad_input(np.array([3.0, 4.0])), [6.0, 8.0])


def test_linear_neuron_parameter_gradient():
    net = Network(1, NetSpec((), ()), 1)
    _set(net, [[[3.0]]], [[0.0]])
    (gw, gb) = net.grad_params(lambda y: 0.5 * (y**2).sum(), np.array([[2.0]]))
    assert gw[0, 0] == pytest.approx(12.0)
    assert gb[0] == pytest.approx(6.0)


@pytest.mark.parametrize("acts", [("tanh",), ("sigmoid",), ("softplus",), ("tanh2",), ("poly4",), ("tanh", "poly2")])
def test_forward_matches_symbolic(acts, rng):
    net = _with_random_biases(_random_net(3, acts, (4,) * len(acts)), 5)
    (e,) = net.to_symbolic()
    X = rng.uniform(-2, 2, size=(1000, 2))
    (sym,) = ex.evaluate([e], X)
    assert np.max(np.abs(net.forward(X)[:, 0] - sym)) <= 1e-9


def test_grad_input_matches_symbolic(rng):
    net = _with_random_biases(_random_net(11, ("tanh", "sigmoid"), (5, 3)), 2)
    (e,) = net.to_symbolic()
    grads = ex.gradient(e, 2)
    X = rng.uniform(-2, 2, size=(100, 2))
    sym = np.stack(ex.evaluate(grads, X), axis=1)
    assert np.max(np.abs(net.grad_input(X) - sym)) <= 1e-8


def test_grad_input_at_origin_is_chain_of_weights():
    net = _random_net(4, ("tanh",), (3,))
    W1, W2 = (w.detach().numpy() for w in net.layer_weights())
    assert np.allclose(net.grad_input(np.zeros(2)), (W2 @ W1)[0])


def test_parameter_gradients_match_finite_differences(rng):
    net = _with_random_biases(_random_net(8, ("tanh", "tanh"), (6, 5)), 1)
    X = rng.uniform(-1, 1, size=(20, 2))

    def loss_fn(y):
        return (y**2).mean()

    grads = net.grad_params(loss_fn, X)
    h = 1e-5
    worst = 0.0
    params = net.parameters()
    picks = [(k, idx) for k, p in enumerate(params) for idx in np.ndindex(*p.shape)]
    for j in rng.choice(len(picks), size=50, replace=False):
        k, idx = picks[j]
        p = params[k]
        with torch.no_grad():
            old = p[idx].item()
            p[idx] = old + h
            up = loss_fn(net.forward_t(torch.as_tensor(X))).item()
            p[idx] = old - h
            dn = loss_fn(net.forward_t(torch.as_tensor(X))).item()
            p[idx] = old
        fd = (up - dn) / (2 * h)
        worst = max(worst, abs(grads[k][idx] - fd) / max(1e-6, abs(fd)))
    assert worst <= 1e-4


def test_positive_output_weights_survive_training(rng):
    net = _random_net(1, ("poly2",), (4,), positive_output_weights=True)
    opt = torch.optim.SGD(net.parameters(), lr=10.0)
    X = torch.as_tensor(rng.uniform(-1, 1, size=(50, 2)))
    for _ in range(20):
        opt.zero_grad()
        net.forward_t(X).sum().backward()  # pushes output weights down hard
        opt.step()
        assert torch.all(net.layer_weights()[-1] > 0)


@settings(max_examples=30)
@given(st.integers(0, 10_000))
def test_lyapunov_net_positive_off_origin(seed):
    net = _random_net(seed, ("poly2",), (6,), positive_output_weights=True)
    X = np.random.default_rng(seed).uniform(-1, 1, size=(200, 2))
    X = X[np.linalg.norm(X, axis=1) > 1e-3]
    assert net.forward(np.zeros(2))[0] == 0.0
    # non-negative by construction; a generic 6-neuron layer has full rank so strictly positive
    assert np.all(net.forward(X) > 0)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.sampled_from([("tanh",), ("sigmoid",), ("softplus",), ("poly1",)]))
def test_controller_zero_at_origin(seed, acts):
    net = _with_random_biases(_random_net(seed, acts, (4,), out=2, zero_at_origin=True), seed)
    assert np.array_equal(net.forward(np.zeros(2)), np.zeros(2))
    outs = net.to_symbolic(1e-3)
    assert all(ex.eval_expr(o, [0.0, 0.0]) == 0.0 for o in outs)


def test_linear_controller_symbolic():
    net = Network(2, NetSpec((), ()), 1)
    _set(net, [[[-1.0, -1.73]]], [[0.0]])
    (e,) = net.to_symbolic(1e-3)
    assert ex.pretty(e) == "-1.0*x0 + -1.73*x1"
    assert ex.eval_expr(e, [2.0, -1.0]) == pytest.approx(-2.0 + 1.73)


def test_close_loop_substitutes_inputs():
    f = ex.VectorField.parse(["x1", "u0"], 1)
    g = close_loop(f, [ex.parse("-x0 - x1", 2)])
    assert g.dim_input == 0
    assert ex.eval_expr(g.components[1], [1.0, 2.0]) == -3.0


def test_close_loop_two_inputs_and_equilibrium():
    f = ex.VectorField.parse(["u0 + x0 + x1", "u1 - x0 - x1"], 2)
    ctrl = _random_net(2, ("poly1",), (8,), out=2, zero_at_origin=True)
    g = close_loop(f, ctrl)
    assert g.dim_input == 0
    assert all(ex.max_input_index(c) < 0 for c in g.components)
    assert [ex.eval_expr(c, [0.0, 0.0]) for c in g.components] == [0.0, 0.0]


def test_close_loop_dimension_mismatch():
    f = ex.VectorField.parse(["x1", "u0"], 1)
    with pytest.raises(ValueError):
        close_loop(f, [ex.parse("x0", 2), ex.parse("x1", 2)])


def test_dict_round_trip(rng):
    net = _with_random_biases(_random_net(9, ("tanh",), (3,), out=2, zero_at_origin=True), 3)
    other = Network.from_dict(net.to_dict())
    X = rng.uniform(-1, 1, size=(10, 2))
    assert np.allclose(net.forward(X), other.forward(X))
