"""Parity between the autodiff backend and the shift-rule engine."""

import numpy as np
import pytest

from qpinn.qnet import build_network, evaluate
from qpinn.qdiff import (
    EvalTape,
    spatial_gradient,
    spatial_hessian,
    theta_gradient,
)
from qpinn.fastsim import fast_network


CASES = [
    (1, 1, 1, "chebyshev_acos", False),
    (2, 1, 2, "chebyshev_acos", False),
    (3, 2, 2, "tanh", False),
    (4, 1, 3, "chebyshev_acos", False),
    (3, 1, 2, "chebyshev_acos", True),
    (2, 2, 1, "tanh", True),
]


@pytest.mark.parametrize("n,M,d,kind,identity", CASES)
def test_value_parity(n, M, d, kind, identity):
    rng = np.random.default_rng(100 + n + 10 * M)
    net = build_network(n, M, d, kind, rng, identity_lambda=identity)
    fn = fast_network(net)
    xr = np.random.default_rng(7)
    for _ in range(5):
        x = xr.uniform(0.05, 0.95, size=d)
        assert abs(fn.value(net.theta, x) - evaluate(net, x)) < 1e-10


@pytest.mark.parametrize("n,M,d,kind,identity", CASES)
def test_gradient_parity(n, M, d, kind, identity):
    rng = np.random.default_rng(200 + n + 10 * M)
    net = build_network(n, M, d, kind, rng, identity_lambda=identity)
    fn = fast_network(net)
    x = np.random.default_rng(8).uniform(0.1, 0.9, size=d)
    g_fast = fn.spatial_gradient(net.theta, x)
    g_shift = spatial_gradient(net, x)
    assert np.allclose(g_fast, g_shift, atol=1e-9)


@pytest.mark.parametrize("n,M,d,kind,identity", CASES[:4])
def test_hessian_parity(n, M, d, kind, identity):
    rng = np.random.default_rng(300 + n + 10 * M)
    net = build_network(n, M, d, kind, rng, identity_lambda=identity)
    fn = fast_network(net)
    x = np.random.default_rng(9).uniform(0.1, 0.9, size=d)
    h_fast = fn.spatial_hessian(net.theta, x)
    h_shift = spatial_hessian(net, x)
    assert np.allclose(h_fast, h_shift, atol=1e-9)
    assert np.allclose(h_fast, h_fast.T, atol=1e-10)


def test_theta_gradient_parity():
    rng = np.random.default_rng(42)
    net = build_network(3, 2, 2, "chebyshev_acos", rng)
    fn = fast_network(net)
    x = np.array([0.3, 0.7])
    tape = EvalTape(net)
    tape.value(x).accumulate(1.0)
    g_shift = theta_gradient(net, tape)
    g_fast = fn.theta_gradient(net.theta, x)
    assert np.allclose(g_fast, g_shift, atol=1e-9)


def test_theta_gradient_parity_tanh():
    rng = np.random.default_rng(43)
    net = build_network(2, 1, 3, "tanh", rng)
    fn = fast_network(net)
    x = np.array([0.2, -0.4, 0.9])
    tape = EvalTape(net)
    tape.value(x).accumulate(1.0)
    g_shift = theta_gradient(net, tape)
    g_fast = fn.theta_gradient(net.theta, x)
    assert np.allclose(g_fast, g_shift, atol=1e-9)


def test_boundedness_fast():
    rng = np.random.default_rng(5)
    net = build_network(3, 1, 2, "chebyshev_acos", rng)
    fn = fast_network(net)
    xs = np.random.default_rng(6).uniform(0, 1, size=(50, 2))
    for x in xs:
        assert abs(fn.value(net.theta, x)) <= 3 * net.n_qubits + 1e-9
