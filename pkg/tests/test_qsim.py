import numpy as np
import pytest

from qpinn.qsim import (
    GateOp,
    PauliHamiltonian,
    QuantumState,
    ROTATION_GENERATORS,
    apply_gate,
    expectation,
    expectation_shots,
    rotation_matrix,
    run_circuit,
)


def test_ry_half_pi_on_zero():
    state = apply_gate(QuantumState.zero(1), GateOp("ry", target=0, angle=np.pi / 2))
    assert np.allclose(state.amplitudes, [np.sqrt(2) / 2, np.sqrt(2) / 2], atol=1e-12)


def test_cnot_truth_table():
    # |10> in qubit order (qubit1, qubit0): qubit 0 is set -> index 1
    amp = np.zeros(4, dtype=complex)
    amp[1] = 1.0
    state = apply_gate(QuantumState(2, amp), GateOp("cnot", target=1, control=0))
    expected = np.zeros(4)
    expected[3] = 1.0
    assert np.allclose(state.amplitudes, expected)


def test_rz_is_phase_only_on_basis_state():
    state = apply_gate(QuantumState.zero(1), GateOp("rz", target=0, angle=1.234))
    assert np.allclose(np.abs(state.amplitudes), [1.0, 0.0], atol=1e-12)


def test_rotation_matrix_generator_identity():
    rng = np.random.default_rng(0)
    for kind, G in ROTATION_GENERATORS.items():
        for x in rng.uniform(-6, 6, size=10):
            M = rotation_matrix(kind, x)
            ref = np.cos(x / 2) * np.eye(2) - 1j * np.sin(x / 2) * G
            assert np.max(np.abs(M - ref)) < 1e-12


def test_apply_gate_rejects_bad_indices():
    state = QuantumState.zero(2)
    with pytest.raises(ValueError):
        apply_gate(state, GateOp("rx", target=5, angle=0.1))
    with pytest.raises(ValueError):
        apply_gate(state, GateOp("cnot", target=1, control=1))
    with pytest.raises(ValueError):
        apply_gate(state, GateOp("unitary", matrix=np.ones((4, 4), dtype=complex)))


def test_norm_preserved_by_random_circuits():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        state = QuantumState.zero(n)
        gates = []
        for _ in range(15):
            kind = rng.choice(["rx", "ry", "rz", "cnot"])
            if kind == "cnot" and n > 1:
                c, t = rng.choice(n, size=2, replace=False)
                gates.append(GateOp("cnot", target=int(t), control=int(c)))
            elif kind != "cnot":
                gates.append(GateOp(kind, target=int(rng.integers(n)), angle=float(rng.normal())))
        out = run_circuit(state, gates)
        assert abs(out.norm_squared() - 1.0) < 1e-10


def test_ising_cost_on_all_zeros():
    ham = PauliHamiltonian.ising_cost(3)
    assert len(ham.terms) == 9
    val = expectation(QuantumState.zero(3), ham)
    assert abs(val - 6.0) == 0.0


def test_ising_cost_single_qubit_collapses_zz_to_identity():
    ham = PauliHamiltonian.ising_cost(1)
    assert len(ham.terms) == 3
    assert ham.terms[0][1] == "I"
    assert abs(expectation(QuantumState.zero(1), ham) - 2.0) < 1e-12


def test_x_on_plus_state():
    plus = QuantumState(1, np.array([1, 1], dtype=complex) / np.sqrt(2))
    assert abs(expectation(plus, PauliHamiltonian([(1.0, "X")])) - 1.0) < 1e-12


def test_z_after_ry_gives_cosine():
    state = apply_gate(QuantumState.zero(1), GateOp("ry", target=0, angle=0.3))
    val = expectation(state, PauliHamiltonian([(1.0, "Z")]))
    assert abs(val - np.cos(0.3)) < 1e-12
    assert round(val, 6) == 0.955336


def test_expectation_bounded_by_coefficient_sum():
    rng = np.random.default_rng(2)
    for n in (2, 3, 4):
        ham = PauliHamiltonian.ising_cost(n)
        for _ in range(50):
            amp = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
            amp /= np.linalg.norm(amp)
            val = expectation(QuantumState(n, amp), ham)
            assert abs(val) <= 3 * n + 1e-10


def test_expectation_size_mismatch():
    with pytest.raises(ValueError):
        expectation(QuantumState.zero(2), PauliHamiltonian.ising_cost(3))


def test_shots_z_on_plus_is_near_zero():
    rng = np.random.default_rng(3)
    plus = QuantumState(1, np.array([1, 1], dtype=complex) / np.sqrt(2))
    est = expectation_shots(plus, PauliHamiltonian([(1.0, "Z")]), 10**5, rng)
    assert abs(est) < 0.01


def test_shots_deterministic_on_eigenstate():
    rng = np.random.default_rng(4)
    est = expectation_shots(QuantumState.zero(1), PauliHamiltonian([(1.0, "Z")]), 17, rng)
    assert est == 1.0


def test_shots_ising_on_zeros():
    rng = np.random.default_rng(5)
    ham = PauliHamiltonian.ising_cost(3)
    shots = 10**4
    # ZZ and Z terms are deterministic on |000>; only the three X terms
    # fluctuate, each with variance 1 over ~shots/9 samples.
    stderr = np.sqrt(3.0 / (shots // 9))
    est = expectation_shots(QuantumState.zero(3), ham, shots, rng)
    assert abs(est - 6.0) < 3 * stderr


def test_shots_unbiased():
    rng = np.random.default_rng(6)
    state = run_circuit(
        QuantumState.zero(2),
        [GateOp("ry", target=0, angle=0.7), GateOp("cnot", target=1, control=0),
         GateOp("rx", target=1, angle=-0.4)],
    )
    ham = PauliHamiltonian.ising_cost(2)
    exact = expectation(state, ham)
    reps = 200
    shots = 600
    vals = [expectation_shots(state, ham, shots, rng) for _ in range(reps)]
    # crude per-run std bound: 6 terms each bounded in [-1, 1]
    sigma = np.std(vals, ddof=1)
    assert abs(np.mean(vals) - exact) < 4 * sigma / np.sqrt(reps)


def test_shots_requires_shot_per_term():
    with pytest.raises(ValueError):
        expectation_shots(QuantumState.zero(2), PauliHamiltonian.ising_cost(2), 3,
                          np.random.default_rng(0))


def test_y_term_measurement_basis():
    rng = np.random.default_rng(7)
    # RX(-pi/2)|0> is the +1 eigenstate of Y
    state = apply_gate(QuantumState.zero(1), GateOp("rx", target=0, angle=-np.pi / 2))
    exact = expectation(state, PauliHamiltonian([(1.0, "Y")]))
    est = expectation_shots(state, PauliHamiltonian([(1.0, "Y")]), 500, rng)
    assert abs(exact - 1.0) < 1e-12
    assert est == 1.0
