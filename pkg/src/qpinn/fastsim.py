"""Autodiff backend for network evaluation.

Re-implements the state-vector pipeline on JAX in double precision so values
and every derivative are exact (up to float64 rounding) and must agree with
the shift-rule engine to 1e-9. The shift engine remains the reference and the
carrier of evaluation counts; this backend exists to make the training loops
fast enough for repeated multi-seed runs.
"""

from jax import config as _jax_config

_jax_config.update("jax_enable_x64", True)

import jax
import jax.numpy as jnp
import numpy as np

from .qsim import PAULI_X, PAULI_Y, PAULI_Z
from .qnet import NetworkSpec

_I2 = jnp.eye(2, dtype=jnp.complex128)
_GEN = {
    "rx": jnp.asarray(PAULI_X),
    "ry": jnp.asarray(PAULI_Y),
    "rz": jnp.asarray(PAULI_Z),
}


def _rot(kind, angle):
    return jnp.cos(angle / 2) * _I2 - 1j * jnp.sin(angle / 2) * _GEN[kind]


def _apply1q(psi, n, qubit, mat):
    axis = n - 1 - qubit
    moved = jnp.moveaxis(psi, axis, 0)
    out = jnp.tensordot(mat, moved, axes=((1,), (0,)))
    return jnp.moveaxis(out, 0, axis)


class FastNetwork:
    """JAX twin of a NetworkSpec; callable as u(theta, x)."""

    def __init__(self, net: NetworkSpec):
        self.n = net.n_qubits
        self.M = net.n_layers
        self.d_in = net.d_in
        self.kind = net.encoding.kind
        self.chi = jnp.asarray(net.encoding.chi)
        self.feat = [int(f) for f in net.encoding.feature_index]
        self.haar = None if net.haar is None else jnp.asarray(net.haar)
        self.cost = jnp.asarray(net.cost.matrix())
        if self.n > 1:
            idx = np.arange(2**self.n)
            self.perms = [
                jnp.asarray(idx ^ (((idx >> q) & 1) << ((q + 1) % self.n)))
                for q in range(self.n)
            ]
        else:
            self.perms = []
        self.theta0 = jnp.asarray(net.theta)
        self._grad_x = jax.grad(self.u, argnums=1)
        self._hess_x = jax.jacfwd(self._grad_x, argnums=1)
        self._grad_theta = jax.grad(self.u, argnums=0)

    def u(self, theta, x):
        n = self.n
        shape = (2,) * n
        psi = jnp.zeros(shape, dtype=jnp.complex128).at[(0,) * n].set(1.0)
        for j in range(n):
            v = x[self.feat[j]]
            if self.kind == "chebyshev_acos":
                z = jnp.clip(1.5 * (v - 0.5), -1.0, 1.0)
                ang = self.chi[j] * jnp.pi * jnp.arccos(z)
            else:
                ang = self.chi[j] * jnp.pi * jnp.tanh(v)
            psi = _apply1q(psi, n, j, _rot("rz", ang))
        if self.haar is not None:
            psi = (self.haar @ psi.reshape(-1)).reshape(shape)
        width = self.d_in + 2
        for layer in range(self.M):
            for q in range(n):
                base = (layer * n + q) * width
                phi = theta[base]
                gamma = theta[base + 1 : base + 1 + self.d_in]
                alpha = theta[base + 1 + self.d_in]
                psi = _apply1q(psi, n, q, _rot("rz", 2 * jnp.dot(gamma, x) + 2 * alpha))
                psi = _apply1q(psi, n, q, _rot("ry", 2 * phi))
            for perm in self.perms:
                psi = psi.reshape(-1)[perm].reshape(shape)
        flat = psi.reshape(-1)
        return jnp.real(jnp.vdot(flat, self.cost @ flat))

    # Eager convenience wrappers (training code applies its own jit/vmap).

    def value(self, theta, x):
        return float(self.u(jnp.asarray(theta), jnp.asarray(x, dtype=jnp.float64)))

    def spatial_gradient(self, theta, x):
        return np.asarray(self._grad_x(jnp.asarray(theta), jnp.asarray(x, dtype=jnp.float64)))

    def spatial_hessian(self, theta, x):
        return np.asarray(self._hess_x(jnp.asarray(theta), jnp.asarray(x, dtype=jnp.float64)))

    def theta_gradient(self, theta, x):
        return np.asarray(self._grad_theta(jnp.asarray(theta), jnp.asarray(x, dtype=jnp.float64)))


def fast_network(net: NetworkSpec) -> FastNetwork:
    return FastNetwork(net)
