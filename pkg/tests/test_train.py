"""Losses, Adam, trials, the evaluation-budget invariant and the run loop."""

import numpy as np
import pytest

from qpinn.complexity import training_iteration_cost
from qpinn.pde import (
    heat_problem,
    make_problem,
    residual as pde_residual,
    poisson_problem,
    p_laplace_problem,
    sample_boundary,
    sample_domain,
    variational_density,
)
from qpinn.qdiff import EvalCounter, finite_difference_gradient, theta_gradient
from qpinn.qnet import build_network
from qpinn.smooth import SmoothingConfig
from qpinn.train import (
    AdamConfig,
    AdamState,
    AnalyticTrial,
    ClassicalTrial,
    LossConfig,
    NetworkConfig,
    QuantumTrial,
    adam_step,
    aggregate_metric,
    build_classical_net,
    classical_basis_fd_laplacian,
    classical_derivatives,
    classical_forward,
    classical_loss_and_grad,
    metrics,
    quantum_loss_shift,
    run_many,
    standard_loss,
    train,
    variational_loss,
    write_history_csv,
    write_metrics_csv,
    xi_for,
)


# ---------------------------------------------------------------------------
# configs and the optimizer


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(formulation="huber")
    with pytest.raises(ValueError):
        LossConfig(formulation="standard_smoothed")  # missing smoothing config
    with pytest.raises(ValueError):
        LossConfig(lambda_e=-1.0)
    with pytest.raises(ValueError):
        LossConfig(n_r=0)
    cfg = LossConfig(formulation="variational_smoothed",
                     smoothing=SmoothingConfig(K=8))
    assert cfg.variational and cfg.smoothed


def test_adam_first_step_is_signed_learning_rate():
    # With zero state, m_hat/sqrt(v_hat) = sign(g) up to epsilon.
    cfg = AdamConfig(learning_rate=0.01)
    params = np.array([1.0, -2.0, 3.0])
    g = np.array([0.5, -4.0, 1e-3])
    new, state = adam_step(params, g, AdamState.zeros(3), cfg)
    assert np.allclose(new, params - 0.01 * np.sign(g), atol=1e-6)
    assert state.t == 1


def test_adam_zero_gradient_keeps_params():
    cfg = AdamConfig()
    params = np.array([0.3, 0.7])
    new, _ = adam_step(params, np.zeros(2), AdamState.zeros(2), cfg)
    assert np.allclose(new, params)


def test_adam_clip_bounds_the_effective_gradient():
    # A huge gradient component behaves exactly like one clipped to the limit.
    cfg = AdamConfig(learning_rate=0.1, clip=1.0)
    params = np.zeros(1)
    big, _ = adam_step(params, np.array([1e6]), AdamState.zeros(1), cfg)
    ref, _ = adam_step(params, np.array([1.0]), AdamState.zeros(1),
                       AdamConfig(learning_rate=0.1))
    assert np.allclose(big, ref)


def test_adam_step_size_never_exceeds_learning_rate_by_much():
    rng = np.random.default_rng(0)
    cfg = AdamConfig(learning_rate=1e-3)
    params = np.zeros(5)
    state = AdamState.zeros(5)
    for _ in range(50):
        new, state = adam_step(params, rng.normal(size=5) * 10, state, cfg)
        assert np.max(np.abs(new - params)) < 5 * cfg.learning_rate
        params = new


# ---------------------------------------------------------------------------
# classical random-feature baseline


def test_classical_forward_hand_example():
    net = build_classical_net(1, 2, np.random.default_rng(0))
    net.E = np.array([[1.0, 0.0]])
    net.B = np.array([-0.5])
    net.W = np.array([2.0])
    # H(x) = 2 * max(0, x1 - 0.5)
    assert classical_forward(net, np.array([1.0, 0.3])) == pytest.approx(1.0)
    assert classical_forward(net, np.array([0.2, 0.9])) == pytest.approx(0.0)


def test_classical_zero_weights_give_zero_function():
    net = build_classical_net(20, 2, np.random.default_rng(1))
    assert net.W.shape == (20,)
    assert np.all(net.W == 0.0)
    x = np.array([0.4, 0.6])
    assert classical_forward(net, x) == 0.0


def test_classical_derivatives_match_finite_differences():
    net = build_classical_net(30, 2, np.random.default_rng(2))
    net.W = np.random.default_rng(3).normal(size=30)
    x = np.array([0.37, 0.61])
    b = classical_derivatives(net, x)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (classical_forward(net, x + e) - classical_forward(net, x - e)) / (2 * h)
        assert b.gradient[i] == pytest.approx(fd, abs=1e-6)


def test_classical_fd_basis_laplacian_is_linear_in_weights():
    # u = W . phi pointwise, so lap(u) = W . lap(phi).
    net = build_classical_net(15, 2, np.random.default_rng(4))
    W = np.random.default_rng(5).normal(size=15)
    x = np.array([0.41, 0.52])
    basis = classical_basis_fd_laplacian(net, x)
    net.W = W

    def u(z):
        return classical_forward(net, z)

    h = 1e-4
    lap = 0.0
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        lap += (u(x + e) - 2 * u(x) + u(x - e)) / h**2
    assert float(W @ basis) == pytest.approx(lap, abs=1e-8)


def test_classical_loss_gradient_matches_finite_differences():
    problem = poisson_problem()
    net = build_classical_net(12, 2, np.random.default_rng(6))
    rng = np.random.default_rng(7)
    net.W = rng.normal(size=12) * 0.1
    xr = sample_domain(problem, 5, rng)
    xe = sample_boundary(problem, 4, rng)
    for cfg in (LossConfig("variational", lambda_e=0.7, n_r=5, n_e=4),
                LossConfig("standard", lambda_e=0.7, n_r=5, n_e=4)):
        base, grad = classical_loss_and_grad(net, problem, cfg, xr, xe)
        W0 = net.W.copy()
        h = 1e-7
        for k in range(3):
            net.W = W0.copy()
            net.W[k] += h
            up, _ = classical_loss_and_grad(net, problem, cfg, xr, xe)
            net.W = W0.copy()
            net.W[k] -= h
            dn, _ = classical_loss_and_grad(net, problem, cfg, xr, xe)
            assert grad[k] == pytest.approx((up - dn) / (2 * h), abs=1e-4)
        net.W = W0


# ---------------------------------------------------------------------------
# loss values against trial-based references


def quantum_setup(problem, n=2, M=1, seed=11):
    rng = np.random.default_rng(seed)
    net = build_network(n, M, problem.d_in, "chebyshev_acos", rng)
    return net


def test_shift_loss_matches_generic_standard_loss():
    problem = poisson_problem()
    net = quantum_setup(problem)
    rng = np.random.default_rng(12)
    xr = sample_domain(problem, 4, rng)
    xe = sample_boundary(problem, 3, rng)
    cfg = LossConfig("standard", lambda_e=1.3, n_r=4, n_e=3)
    loss, _ = quantum_loss_shift(net, net.theta, problem, cfg, xr, xe)
    trial = QuantumTrial(net, engine="shift")
    ref = standard_loss(trial, problem, xr, xe, 1.3)
    assert loss == pytest.approx(ref, abs=1e-12)


def test_shift_loss_matches_generic_variational_loss():
    problem = poisson_problem()
    net = quantum_setup(problem)
    rng = np.random.default_rng(13)
    xr = sample_domain(problem, 4, rng)
    xe = sample_boundary(problem, 3, rng)
    cfg = LossConfig("variational", lambda_e=0.5, n_r=4, n_e=3)
    loss, _ = quantum_loss_shift(net, net.theta, problem, cfg, xr, xe)
    trial = QuantumTrial(net, engine="shift")
    ref = variational_loss(trial, problem, xr, xe, 0.5)
    assert loss == pytest.approx(ref, abs=1e-12)


def test_empty_batch_raises():
    problem = poisson_problem()
    net = quantum_setup(problem)
    trial = QuantumTrial(net, engine="shift")
    with pytest.raises(ValueError):
        standard_loss(trial, problem, [], [np.zeros(2)], 1.0)
    with pytest.raises(ValueError):
        quantum_loss_shift(net, net.theta, problem,
                           LossConfig("standard"), [], [np.zeros(2)])


def test_variational_rejects_heat():
    problem = heat_problem(d=1)
    net = build_network(2, 1, 2, "chebyshev_acos", np.random.default_rng(0))
    trial = QuantumTrial(net, engine="shift")
    with pytest.raises(ValueError):
        variational_loss(trial, problem, [np.array([0.1, 0.2])],
                         [np.array([0.0, 0.2])], 1.0)


def test_lambda_zero_drops_boundary_term():
    problem = poisson_problem()
    net = quantum_setup(problem)
    rng = np.random.default_rng(14)
    xr = sample_domain(problem, 3, rng)
    xe = sample_boundary(problem, 2, rng)
    cfg = LossConfig("standard", lambda_e=0.0, n_r=3, n_e=2)
    loss, _ = quantum_loss_shift(net, net.theta, problem, cfg, xr, xe)
    trial = QuantumTrial(net, engine="shift")
    interior_only = np.mean([abs(pde_residual(problem, z, trial.bundle(z)))
                             for z in xr])
    assert loss == pytest.approx(interior_only, abs=1e-12)


def test_analytic_trial_has_zero_standard_loss_and_metric():
    problem = poisson_problem()
    trial = AnalyticTrial(problem)
    rng = np.random.default_rng(15)
    xr = sample_domain(problem, 10, rng)
    xe = sample_boundary(problem, 10, rng)
    assert standard_loss(trial, problem, xr, xe, 1.0) == pytest.approx(0.0, abs=1e-9)
    assert metrics(trial, problem, 200, rng) == pytest.approx(0.0, abs=1e-12)


def test_variational_energy_of_solution_beats_perturbation():
    # Dirichlet principle: the solution minimizes the energy among functions
    # with its boundary values; compare against u + 0.1 sin(pi x1) sin(pi x2).
    problem = poisson_problem()
    rng = np.random.default_rng(16)
    pts = rng.uniform(0.0, 1.0, size=(100_000, 2))

    def energy(bump):
        total = 0.0
        for z in pts:
            b = AnalyticTrial(problem).bundle(z)
            g = b.gradient.copy()
            if bump:
                s1, c1 = np.sin(np.pi * z[0]), np.cos(np.pi * z[0])
                s2, c2 = np.sin(np.pi * z[1]), np.cos(np.pi * z[1])
                g = g + 0.1 * np.pi * np.array([c1 * s2, s1 * c2])
                val = b.value + 0.1 * s1 * s2
            else:
                val = b.value
            total += 0.5 * float(g @ g) - problem.source(z) * val
        return total / len(pts)

    assert energy(False) < energy(True)


def test_metric_of_constant_shift_has_closed_form():
    problem = poisson_problem()
    base = AnalyticTrial(problem)

    class Shifted:
        def value(self, z):
            return base.value(z) + 0.1

        def value_batch(self, pts):
            return base.value_batch(pts) + 0.1

    rng = np.random.default_rng(17)
    pts = rng.uniform(0.0, 1.0, size=(4000, 2))
    truth = np.array([problem.solution(z) for z in pts])
    expected = np.sqrt(np.sum(0.1**2 * np.ones(len(pts))) / np.sum(truth**2))
    got = metrics(Shifted(), problem, 4000, np.random.default_rng(17))
    assert got == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------------------
# exact theta gradients and the evaluation budget


def residual_is_smooth(problem, net, cfg, xr, xe, eps=1e-3):
    """Keep batches away from the |.| kinks so FD comparisons are valid."""
    trial = QuantumTrial(net, engine="shift")
    for z in xr:
        if abs(pde_residual(problem, z, trial.bundle(z))) < eps:
            return False
    for z in xe:
        if abs(trial.value(z) - problem.boundary_values(z)) < eps:
            return False
    return True


def test_theta_gradient_of_loss_matches_finite_differences():
    problem = poisson_problem()
    net = quantum_setup(problem, n=2, seed=21)
    rng = np.random.default_rng(22)
    xr = sample_domain(problem, 3, rng)
    xe = sample_boundary(problem, 2, rng)
    for formulation in ("standard", "variational"):
        cfg = LossConfig(formulation, lambda_e=0.8, n_r=3, n_e=2)
        assert residual_is_smooth(problem, net, cfg, xr, xe)
        _, tape = quantum_loss_shift(net, net.theta, problem, cfg, xr, xe)
        grad = theta_gradient(net, tape)
        h = 1e-6
        for k in range(0, net.n_theta, 3):
            th = net.theta.copy()
            th[k] += h
            up, _ = quantum_loss_shift(net, th, problem, cfg, xr, xe)
            th[k] -= 2 * h
            dn, _ = quantum_loss_shift(net, th, problem, cfg, xr, xe)
            assert grad[k] == pytest.approx((up - dn) / (2 * h), abs=2e-5)


def test_per_iteration_evaluations_equal_budget_formula():
    # One shift-engine iteration costs exactly xi(L) * (1 + 2 N_theta).
    cases = [
        (poisson_problem(), "standard"),
        (poisson_problem(), "variational"),
        (heat_problem(d=1), "standard"),
        (p_laplace_problem(d=2, p=3.0), "standard"),
    ]
    rng = np.random.default_rng(23)
    for problem, formulation in cases:
        net = build_network(2, 1, problem.d_in, "chebyshev_acos", rng)
        cfg = LossConfig(formulation, lambda_e=1.0, n_r=3, n_e=2)
        counter = EvalCounter()
        xr = sample_domain(problem, 3, rng)
        xe = sample_boundary(problem, 2, rng)
        _, tape = quantum_loss_shift(net, net.theta, problem, cfg, xr, xe,
                                     counter=counter)
        loss_evals = counter.count
        assert loss_evals == xi_for(problem, cfg, net)
        theta_gradient(net, tape, counter=counter)
        assert counter.count == training_iteration_cost(loss_evals, net.n_theta)


def test_train_records_budget_per_iteration():
    problem = poisson_problem()
    cfg = LossConfig("standard", lambda_e=1.0, n_r=2, n_e=2)
    res = train(problem, "quantum", cfg, AdamConfig(iterations=2),
                NetworkConfig(n_qubits=2, n_layers=1), seed=3, engine="shift")
    net = build_network(2, 1, 2, "chebyshev_acos",
                        np.random.default_rng(np.random.SeedSequence(3).spawn(4)[0]))
    expected = training_iteration_cost(xi_for(problem, cfg, net), net.n_theta)
    assert list(res.per_iteration_evals) == [expected, expected]
    assert res.eval_total == 2 * expected


# ---------------------------------------------------------------------------
# engines agree and runs are reproducible


def test_fast_and_shift_training_match():
    problem = poisson_problem()
    cfg = LossConfig("standard", lambda_e=1.0, n_r=4, n_e=3)
    adam = AdamConfig(learning_rate=1e-2, iterations=3)
    net_cfg = NetworkConfig(n_qubits=2, n_layers=1)
    res_fast = train(problem, "quantum", cfg, adam, net_cfg, seed=5, engine="fast")
    res_shift = train(problem, "quantum", cfg, adam, net_cfg, seed=5, engine="shift")
    assert np.allclose(res_fast.losses, res_shift.losses, atol=1e-9)
    assert res_fast.final_metric == pytest.approx(res_shift.final_metric, abs=1e-9)


def test_training_is_seed_deterministic():
    problem = poisson_problem()
    cfg = LossConfig("standard", lambda_e=1.0, n_r=4, n_e=3)
    adam = AdamConfig(iterations=3)
    net_cfg = NetworkConfig(n_qubits=2, n_layers=1)
    a = train(problem, "quantum", cfg, adam, net_cfg, seed=9, engine="fast")
    b = train(problem, "quantum", cfg, adam, net_cfg, seed=9, engine="fast")
    assert np.array_equal(a.losses, b.losses)
    assert a.final_metric == b.final_metric


def test_identity_lambda_network_is_input_inert_with_one_layer():
    problem = poisson_problem()
    cfg = LossConfig("standard", lambda_e=1.0, n_r=3, n_e=2)
    res = train(problem, "quantum_identity_lambda", cfg, AdamConfig(iterations=2),
                NetworkConfig(n_qubits=3, n_layers=1), seed=2, engine="fast")
    pts = np.random.default_rng(0).uniform(0, 1, (10, 2))
    vals = res.trial.value_batch(pts)
    assert np.max(np.abs(vals - vals[0])) < 1e-10


def test_smoothed_training_shares_centers_and_antithetic_pairs():
    # The closed-form budget counts 3 terms per Gaussian sample; the engine
    # shares the center evaluation across samples and reuses each antithetic
    # pair, so a p=2 interior point costs K+1 and a boundary point costs K.
    problem = poisson_problem()
    smooth = SmoothingConfig(sigma=0.1, K=4)
    cfg = LossConfig("standard_smoothed", lambda_e=1.0, n_r=2, n_e=2,
                     smoothing=smooth)
    counter = EvalCounter()
    net = build_network(2, 1, 2, "chebyshev_acos", np.random.default_rng(31))
    rng = np.random.default_rng(32)
    xr = sample_domain(problem, 2, rng)
    xe = sample_boundary(problem, 2, rng)
    _, tape = quantum_loss_shift(net, net.theta, problem, cfg, xr, xe,
                                 counter=counter, rng=np.random.default_rng(33))
    expected = 2 * (smooth.K + 1) + 2 * smooth.K
    assert counter.count == expected
    assert counter.count <= xi_for(problem, cfg, net)


def test_run_many_workers_match_serial():
    problem = poisson_problem()
    cfg = LossConfig("standard", lambda_e=1.0, n_r=3, n_e=2)
    adam = AdamConfig(iterations=2)
    net_cfg = NetworkConfig(n_qubits=2, n_layers=1)
    serial = run_many(problem, "quantum", cfg, adam, net_cfg, [1, 2],
                      engine="fast", workers=1)
    parallel = run_many(problem, "quantum", cfg, adam, net_cfg, [1, 2],
                        engine="fast", workers=2)
    for a, b in zip(serial, parallel):
        assert a.seed == b.seed
        assert np.array_equal(a.losses, b.losses)
        assert a.final_metric == b.final_metric


def test_aggregate_and_csv_outputs(tmp_path):
    problem = poisson_problem()
    cfg = LossConfig("standard", lambda_e=1.0, n_r=2, n_e=2)
    results = run_many(problem, "quantum", cfg, AdamConfig(iterations=2),
                       NetworkConfig(n_qubits=2, n_layers=1), [1, 2],
                       engine="fast")
    mean, std = aggregate_metric(results)
    assert mean == pytest.approx(
        0.5 * (results[0].final_metric + results[1].final_metric))

    hist = tmp_path / "history.csv"
    write_history_csv(hist, results[0])
    lines = hist.read_text().strip().split("\n")
    assert lines[0] == "iteration,loss,wall_ms,eval_count"
    assert len(lines) == 3
    row = lines[1].split(",")
    assert int(row[0]) == 0
    assert float(row[1]) == pytest.approx(results[0].losses[0], rel=1e-15)

    mpath = tmp_path / "metrics.csv"
    write_metrics_csv(mpath, results)
    mlines = mpath.read_text().strip().split("\n")
    assert mlines[0] == "seed,metric,mean,std"
    assert len(mlines) == 3
    assert float(mlines[1].split(",")[2]) == pytest.approx(mean, rel=1e-15)


def test_train_rejects_unknown_kind_and_engine():
    problem = poisson_problem()
    cfg = LossConfig("standard", n_r=2, n_e=2)
    with pytest.raises(ValueError):
        train(problem, "tensor", cfg, AdamConfig(iterations=1),
              NetworkConfig(), seed=0)
    with pytest.raises(ValueError):
        train(problem, "quantum", cfg, AdamConfig(iterations=1),
              NetworkConfig(), seed=0, engine="gpu")


def test_fast_engine_rejects_smoothed_loss():
    problem = poisson_problem()
    cfg = LossConfig("standard_smoothed", smoothing=SmoothingConfig(K=4),
                     n_r=2, n_e=2)
    with pytest.raises(ValueError):
        train(problem, "quantum", cfg, AdamConfig(iterations=1),
              NetworkConfig(n_qubits=2), seed=0, engine="fast")


def test_classical_training_reduces_loss():
    problem = poisson_problem()
    cfg = LossConfig("variational", lambda_e=10.0, n_r=32, n_e=16)
    res = train(problem, "classical", cfg, AdamConfig(learning_rate=5e-3,
                iterations=150), NetworkConfig(classical_nodes=40), seed=1)
    assert res.losses[-1] < res.losses[0]
    assert res.trial_kind == "classical"
