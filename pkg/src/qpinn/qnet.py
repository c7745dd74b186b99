"""Random quantum networks used as PDE trial functions.

A network maps x to <0| G(x)^dag C G(x) |0> with G(x) = U_theta(x) * Lambda *
A(x): a data-encoding layer A(x) of per-qubit R_z rotations with frozen random
scales, a fixed Haar-random unitary Lambda, and M trainable layers each made of
per-qubit universal-approximator gates R_y(2*phi) R_z(2*gamma.x + 2*alpha)
followed by a CNOT ring.

Every rotation angle in the circuit is registered as an AngleSite carrying its
analytic partial derivatives with respect to the inputs; the shift-rule engine
differentiates through these sites.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .qsim import GateOp, PauliHamiltonian, QuantumState, expectation, run_circuit

ENCODING_KINDS = ("chebyshev_acos", "tanh")


@dataclass(frozen=True)
class EncodingSpec:
    kind: str
    chi: np.ndarray  # frozen Uniform(0,1) scale per qubit
    feature_index: np.ndarray  # input coordinate encoded by each qubit


def default_feature_index(n: int, d_in: int) -> np.ndarray:
    """Cyclic assignment of input coordinates to qubit sites."""
    return np.array([(j + 2) % d_in for j in range(n)], dtype=int)


class AngleSite:
    """One rotation gate's angle as a function of (x, theta)."""

    gate_id: str
    gate_kind: str
    qubit: int

    def angle(self, x, theta):
        raise NotImplementedError

    def partial(self, x, theta, i):
        raise NotImplementedError

    def partial2(self, x, theta, i, j):
        raise NotImplementedError

    def dependencies(self, theta):
        """Input coordinates this angle actually varies with."""
        raise NotImplementedError

    def partial_theta_grad(self, x, theta, i):
        """d(partial)/d(theta_k) as a sparse {flat theta index: value} map.

        Nonzero only where the angle's x-slope is itself trainable."""
        return {}


class EncodingSite(AngleSite):
    def __init__(self, qubit: int, kind: str, chi: float, feature: int):
        self.gate_id = f"enc[{qubit}]"
        self.gate_kind = "rz"
        self.qubit = qubit
        self.kind = kind
        self.chi = float(chi)
        self.feature = int(feature)

    def angle(self, x, theta=None):
        v = x[self.feature]
        if self.kind == "chebyshev_acos":
            z = np.clip(1.5 * (v - 0.5), -1.0, 1.0)
            return self.chi * np.pi * np.arccos(z)
        return self.chi * np.pi * np.tanh(v)

    def partial(self, x, theta, i):
        if i != self.feature:
            return 0.0
        v = x[self.feature]
        if self.kind == "chebyshev_acos":
            z = 1.5 * (v - 0.5)
            if abs(z) >= 1.0:
                return 0.0
            return self.chi * np.pi * (-1.5) / np.sqrt(1.0 - z * z)
        th = np.tanh(v)
        return self.chi * np.pi * (1.0 - th * th)

    def partial2(self, x, theta, i, j):
        if i != self.feature or j != self.feature:
            return 0.0
        v = x[self.feature]
        if self.kind == "chebyshev_acos":
            z = 1.5 * (v - 0.5)
            if abs(z) >= 1.0:
                return 0.0
            return -self.chi * np.pi * 2.25 * z * (1.0 - z * z) ** -1.5
        th = np.tanh(v)
        return -2.0 * self.chi * np.pi * th * (1.0 - th * th)

    def dependencies(self, theta=None):
        return frozenset() if self.chi == 0.0 else frozenset([self.feature])


class UatRzSite(AngleSite):
    """Angle 2*gamma.x + 2*alpha of the layer-l, qubit-q trainable R_z."""

    def __init__(self, layer: int, qubit: int, n: int, d_in: int):
        self.gate_id = f"uat[{layer},{qubit}].rz"
        self.gate_kind = "rz"
        self.qubit = qubit
        self.layer = layer
        self._base = (layer * n + qubit) * (d_in + 2)
        self.d_in = d_in

    def _gamma(self, theta):
        return theta[self._base + 1 : self._base + 1 + self.d_in]

    def angle(self, x, theta):
        alpha = theta[self._base + 1 + self.d_in]
        return 2.0 * float(self._gamma(theta) @ np.asarray(x)) + 2.0 * alpha

    def partial(self, x, theta, i):
        return 2.0 * theta[self._base + 1 + i]

    def partial2(self, x, theta, i, j):
        return 0.0

    def dependencies(self, theta):
        g = self._gamma(theta)
        return frozenset(int(i) for i in range(self.d_in) if g[i] != 0.0)

    def partial_theta_grad(self, x, theta, i):
        return {self._base + 1 + i: 2.0}


class UatRySite(AngleSite):
    """Angle 2*phi of the layer-l, qubit-q trainable R_y; input-independent."""

    def __init__(self, layer: int, qubit: int, n: int, d_in: int):
        self.gate_id = f"uat[{layer},{qubit}].ry"
        self.gate_kind = "ry"
        self.qubit = qubit
        self.layer = layer
        self._base = (layer * n + qubit) * (d_in + 2)

    def angle(self, x, theta):
        return 2.0 * theta[self._base]

    def partial(self, x, theta, i):
        return 0.0

    def partial2(self, x, theta, i, j):
        return 0.0

    def dependencies(self, theta=None):
        return frozenset()


@dataclass
class NetworkSpec:
    n_qubits: int
    n_layers: int
    d_in: int
    encoding: EncodingSpec
    haar: np.ndarray | None  # None means Lambda = identity
    cost: PauliHamiltonian
    theta: np.ndarray

    def __post_init__(self):
        n, M, d = self.n_qubits, self.n_layers, self.d_in
        self.sites: list[AngleSite] = [
            EncodingSite(j, self.encoding.kind, self.encoding.chi[j],
                         self.encoding.feature_index[j])
            for j in range(n)
        ]
        for layer in range(M):
            for q in range(n):
                self.sites.append(UatRzSite(layer, q, n, d))
                self.sites.append(UatRySite(layer, q, n, d))
        self.site_by_id = {s.gate_id: s for s in self.sites}

    @property
    def n_theta(self) -> int:
        return self.n_qubits * self.n_layers * (self.d_in + 2)

    def theta_site_map(self):
        """For each flat theta index: (gate_id, chain kind, coordinate).

        chain kind is 'phi' or 'alpha' (angle factor 2) or 'gamma' with the
        coordinate whose value scales the angle derivative (factor 2*x_i).
        """
        out = []
        for layer in range(self.n_layers):
            for q in range(self.n_qubits):
                out.append((f"uat[{layer},{q}].ry", "phi", None))
                for i in range(self.d_in):
                    out.append((f"uat[{layer},{q}].rz", "gamma", i))
                out.append((f"uat[{layer},{q}].rz", "alpha", None))
        return out

    def with_theta(self, theta: np.ndarray) -> "NetworkSpec":
        return replace(self, theta=np.asarray(theta, dtype=float))


def sample_haar(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform unitary via QR of a complex Ginibre matrix with the
    R-diagonal phase normalization."""
    if n > 12:
        raise ValueError("dense Haar sampling capped at 12 qubits")
    dim = 2**n
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def build_network(
    n: int,
    M: int,
    d_in: int,
    encoding_kind: str,
    rng: np.random.Generator,
    identity_lambda: bool = False,
    cost: PauliHamiltonian | None = None,
) -> NetworkSpec:
    """Draw a fresh random network: chi, then Lambda, then the UAT init.

    The Haar draw is consumed even when identity_lambda replaces it, so an
    ablated network shares chi and the initial theta with its full-random
    twin built from the same stream.
    """
    if encoding_kind not in ENCODING_KINDS:
        raise ValueError(f"unknown encoding kind {encoding_kind!r}")
    if n < 1 or M < 1 or d_in < 1:
        raise ValueError("n, M and d_in must be positive")
    chi = rng.uniform(0.0, 1.0, size=n)
    haar = sample_haar(n, rng)
    if identity_lambda:
        haar = None
    theta = rng.uniform(-np.pi / 8, np.pi / 8, size=n * M * (d_in + 2))
    enc = EncodingSpec(encoding_kind, chi, default_feature_index(n, d_in))
    return NetworkSpec(n, M, d_in, enc, haar, cost or PauliHamiltonian.ising_cost(n), theta)


def circuit(net: NetworkSpec, x, theta=None, shifts=None) -> list[GateOp]:
    """Gate list realizing G(x) = U_theta(x) * Lambda * A(x), encoding first."""
    theta = net.theta if theta is None else theta
    shifts = shifts or {}
    n = net.n_qubits
    gates = []
    site_iter = iter(net.sites)
    for j in range(n):
        site = next(site_iter)
        gates.append(GateOp("rz", target=j,
                            angle=site.angle(x, theta) + shifts.get(site.gate_id, 0.0)))
    if net.haar is not None:
        gates.append(GateOp("unitary", matrix=net.haar))
    for _ in range(net.n_layers):
        for q in range(n):
            rz = next(site_iter)
            ry = next(site_iter)
            gates.append(GateOp("rz", target=q,
                                angle=rz.angle(x, theta) + shifts.get(rz.gate_id, 0.0)))
            gates.append(GateOp("ry", target=q,
                                angle=ry.angle(x, theta) + shifts.get(ry.gate_id, 0.0)))
        if n > 1:
            for q in range(n):
                gates.append(GateOp("cnot", control=q, target=(q + 1) % n))
    return gates


def evaluate_shifted(net: NetworkSpec, x, shifts, theta=None) -> float:
    """Network output with selected gate angles offset additively."""
    if len(x) != net.d_in:
        raise ValueError(f"x has length {len(x)}, network expects {net.d_in}")
    for gid in shifts:
        if gid not in net.site_by_id:
            raise KeyError(f"unknown gate id {gid!r}")
    state = run_circuit(QuantumState.zero(net.n_qubits), circuit(net, x, theta, shifts))
    return expectation(state, net.cost)


def evaluate(net: NetworkSpec, x, theta=None) -> float:
    return evaluate_shifted(net, x, {}, theta)


def to_json(net: NetworkSpec) -> str:
    payload = {
        "n_qubits": net.n_qubits,
        "n_layers": net.n_layers,
        "d_in": net.d_in,
        "encoding": {
            "kind": net.encoding.kind,
            "chi": net.encoding.chi.tolist(),
            "feature_index": net.encoding.feature_index.tolist(),
        },
        "haar": None if net.haar is None else {
            "re": net.haar.real.tolist(),
            "im": net.haar.imag.tolist(),
        },
        "cost": [[c, s] for c, s in net.cost.terms],
        "theta": net.theta.tolist(),
    }
    return json.dumps(payload)


def from_json(text: str) -> NetworkSpec:
    payload = json.loads(text)
    enc = EncodingSpec(
        payload["encoding"]["kind"],
        np.array(payload["encoding"]["chi"], dtype=float),
        np.array(payload["encoding"]["feature_index"], dtype=int),
    )
    haar = None
    if payload["haar"] is not None:
        haar = np.array(payload["haar"]["re"], dtype=float) + 1j * np.array(
            payload["haar"]["im"], dtype=float)
    cost = PauliHamiltonian([(float(c), str(s)) for c, s in payload["cost"]])
    return NetworkSpec(
        payload["n_qubits"], payload["n_layers"], payload["d_in"],
        enc, haar, cost, np.array(payload["theta"], dtype=float),
    )
