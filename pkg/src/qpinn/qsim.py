"""Dense state-vector simulation of small qubit registers.

Qubit ordering is little-endian throughout: basis index bit j corresponds to
qubit j, so qubit 0 is the least significant bit of the amplitude index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_DAG = np.array([[1, 0], [0, -1j]], dtype=complex)

_PAULI = {"I": I2, "X": PAULI_X, "Y": PAULI_Y, "Z": PAULI_Z}

ROTATION_GENERATORS = {"rx": PAULI_X, "ry": PAULI_Y, "rz": PAULI_Z}


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    """exp(-i*angle*G/2) = cos(angle/2) I - i sin(angle/2) G for G in {X,Y,Z}."""
    G = ROTATION_GENERATORS[kind]
    return np.cos(angle / 2) * I2 - 1j * np.sin(angle / 2) * G


@dataclass(frozen=True)
class GateOp:
    """One circuit element: a rotation, a CNOT, or a dense register unitary."""

    kind: str  # "rx" | "ry" | "rz" | "cnot" | "unitary"
    target: int = 0
    control: int | None = None
    angle: float = 0.0
    matrix: np.ndarray | None = None


@dataclass
class QuantumState:
    n_qubits: int
    amplitudes: np.ndarray

    @classmethod
    def zero(cls, n_qubits: int) -> "QuantumState":
        if n_qubits < 1:
            raise ValueError("need at least one qubit")
        amp = np.zeros(2**n_qubits, dtype=complex)
        amp[0] = 1.0
        return cls(n_qubits, amp)

    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


def _apply_single_qubit(amp: np.ndarray, n: int, qubit: int, mat: np.ndarray) -> np.ndarray:
    # Qubit q is axis n-1-q of the (2,)*n view of the amplitude vector.
    t = amp.reshape((2,) * n)
    axis = n - 1 - qubit
    t = np.moveaxis(t, axis, 0)
    shape = t.shape
    t = (mat @ t.reshape(2, -1)).reshape(shape)
    return np.moveaxis(t, 0, axis).reshape(-1)


def _cnot_permutation(n: int, control: int, target: int) -> np.ndarray:
    idx = np.arange(2**n)
    return idx ^ (((idx >> control) & 1) << target)


def apply_gate(state: QuantumState, gate: GateOp) -> QuantumState:
    """Return gate * state. The input state is left untouched."""
    n = state.n_qubits
    amp = state.amplitudes
    if gate.kind in ROTATION_GENERATORS:
        if not 0 <= gate.target < n:
            raise ValueError(f"target qubit {gate.target} out of range")
        out = _apply_single_qubit(amp, n, gate.target, rotation_matrix(gate.kind, gate.angle))
    elif gate.kind == "cnot":
        if gate.control is None or not 0 <= gate.control < n or not 0 <= gate.target < n:
            raise ValueError("cnot needs valid control and target qubits")
        if gate.control == gate.target:
            raise ValueError("cnot control equals target")
        out = amp[_cnot_permutation(n, gate.control, gate.target)]
    elif gate.kind == "unitary":
        U = gate.matrix
        if U is None or U.shape != (2**n, 2**n):
            raise ValueError("dense unitary must act on the full register")
        if np.max(np.abs(U.conj().T @ U - np.eye(2**n))) > 1e-10:
            raise ValueError("matrix is not unitary")
        out = U @ amp
    else:
        raise ValueError(f"unknown gate kind {gate.kind!r}")
    return QuantumState(n, out)


def run_circuit(state: QuantumState, gates) -> QuantumState:
    amp = state.amplitudes.copy()
    n = state.n_qubits
    for gate in gates:
        if gate.kind in ROTATION_GENERATORS:
            amp = _apply_single_qubit(amp, n, gate.target, rotation_matrix(gate.kind, gate.angle))
        elif gate.kind == "cnot":
            amp = amp[_cnot_permutation(n, gate.control, gate.target)]
        elif gate.kind == "unitary":
            amp = gate.matrix @ amp
        else:
            raise ValueError(f"unknown gate kind {gate.kind!r}")
    return QuantumState(n, amp)


def _term_matrix(string: str) -> np.ndarray:
    # Little-endian: string position j = qubit j, so qubit n-1 is the leftmost
    # kron factor.
    mats = [_PAULI[c] for c in reversed(string)]
    return reduce(np.kron, mats)


@dataclass
class PauliHamiltonian:
    """Weighted sum of Pauli strings; term strings index qubits left to right
    starting at qubit 0."""

    terms: list  # list of (coefficient, string)
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_qubits(self) -> int:
        return len(self.terms[0][1])

    @classmethod
    def ising_cost(cls, n: int) -> "PauliHamiltonian":
        """Ring Ising operator with transverse and longitudinal fields:
        sum_q [ Z_q Z_{q+1 mod n} + Z_q + X_q ], kept as 3n literal terms."""
        terms = []
        for q in range(n):
            zz = ["I"] * n
            q2 = (q + 1) % n
            if q2 == q:  # n = 1: Z_0 Z_0 collapses to the identity
                zz[q] = "I"
            else:
                zz[q] = "Z"
                zz[q2] = "Z"
            terms.append((1.0, "".join(zz)))
            z = ["I"] * n
            z[q] = "Z"
            terms.append((1.0, "".join(z)))
            x = ["I"] * n
            x[q] = "X"
            terms.append((1.0, "".join(x)))
        return cls(terms)

    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            dim = 2**self.n_qubits
            M = np.zeros((dim, dim), dtype=complex)
            for coeff, string in self.terms:
                M += coeff * _term_matrix(string)
            self._matrix = M
        return self._matrix

    def coefficient_norm(self) -> float:
        return float(sum(abs(c) for c, _ in self.terms))


def expectation(state: QuantumState, ham: PauliHamiltonian) -> float:
    if ham.n_qubits != state.n_qubits:
        raise ValueError("operator and state qubit counts differ")
    amp = state.amplitudes
    val = np.vdot(amp, ham.matrix() @ amp)
    assert abs(val.imag) < 1e-10
    return float(val.real)


def expectation_shots(
    state: QuantumState, ham: PauliHamiltonian, shots: int, rng: np.random.Generator
) -> float:
    """Sampled estimate of <C>: every term is measured in its own rotated
    basis (X via H, Y via H S-dagger), with the shot budget split evenly."""
    if ham.n_qubits != state.n_qubits:
        raise ValueError("operator and state qubit counts differ")
    n_terms = len(ham.terms)
    if shots < n_terms:
        raise ValueError(f"need at least one shot per term ({n_terms})")
    n = state.n_qubits
    base, extra = divmod(shots, n_terms)
    indices = np.arange(2**n)
    total = 0.0
    for k, (coeff, string) in enumerate(ham.terms):
        term_shots = base + (1 if k < extra else 0)
        amp = state.amplitudes
        mask = 0
        for q, c in enumerate(string):
            if c == "I":
                continue
            mask |= 1 << q
            if c == "X":
                amp = _apply_single_qubit(amp, n, q, HADAMARD)
            elif c == "Y":
                amp = _apply_single_qubit(amp, n, q, S_DAG)
                amp = _apply_single_qubit(amp, n, q, HADAMARD)
        probs = np.abs(amp) ** 2
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        signs = 1.0 - 2.0 * (np.bitwise_count(indices & mask) & 1)
        counts = rng.multinomial(term_shots, probs)
        total += coeff * float(counts @ signs) / term_shots
    return total
