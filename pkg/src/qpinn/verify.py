"""Self-check registry: quick invariant suites runnable from the CLI.

The fast level re-derives the load-bearing identities (shift rules, the
expectation decomposition, smoothing unbiasedness, residual oracles and the
evaluation-count formulas) in under a few minutes; the full level adds the
desk-scale training reproductions.
"""

import time
from dataclasses import dataclass

import numpy as np

from .complexity import (
    crossover_report,
    idealized_profile,
    training_iteration_cost,
    xi,
)
from .pde import (
    heat_problem,
    heat_solution_bundle,
    make_problem,
    poisson_problem,
    poisson_solution_bundle,
    residual,
    sample_boundary,
    sample_domain,
)
from .qdiff import (
    EvalCounter,
    finite_difference_gradient,
    finite_difference_hessian,
    order_d_shift_rule,
    random_involutory_hermitian,
    rotation_like_expectation,
    sinusoidal_coefficients,
    spatial_gradient,
    spatial_hessian,
    theta_gradient,
)
from .qnet import build_network, evaluate
from .smooth import SmoothingConfig, smoothed_gradient, smoothed_laplacian
from .train import (
    AdamConfig,
    LossConfig,
    NetworkConfig,
    aggregate_metric,
    quantum_loss_shift,
    run_many,
    xi_for,
)


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str
    seconds: float


def check_shift_rules():
    rng = np.random.default_rng(101)
    worst_fd = 0.0
    worst_fast = 0.0
    from .fastsim import fast_network

    for trial in range(6):
        n = int(rng.integers(1, 4))
        net = build_network(n, int(rng.integers(1, 3)), 2, "chebyshev_acos", rng)
        x = rng.uniform(0.1, 0.9, size=2)
        grad = spatial_gradient(net, x)
        hess = spatial_hessian(net, x)
        f = lambda z: evaluate(net, z)
        worst_fd = max(worst_fd,
                       np.max(np.abs(grad - finite_difference_gradient(f, x))),
                       np.max(np.abs(hess - finite_difference_hessian(f, x))))
        fn = fast_network(net)
        worst_fast = max(worst_fast,
                         np.max(np.abs(grad - np.asarray(fn.spatial_gradient(net.theta, x)))),
                         np.max(np.abs(hess - np.asarray(fn.spatial_hessian(net.theta, x)))))
    ok = worst_fd <= 1e-5 and worst_fast <= 1e-9
    return ok, (f"max |shift - finite difference| = {worst_fd:.2e}, "
                f"max |shift - fast| = {worst_fast:.2e}")


def check_arbitrary_order_rule():
    x0 = 0.3
    analytic = {2: -np.cos(x0), 3: np.sin(x0), 4: np.cos(x0),
                5: -np.sin(x0), 6: -np.cos(x0)}
    worst = 0.0
    for order, truth in analytic.items():
        counter = EvalCounter()
        est = order_d_shift_rule(lambda s: np.cos(x0 + s), order,
                                 counter=counter)
        if counter.count != order:
            return False, f"order {order} used {counter.count} evaluations"
        worst = max(worst, abs(est - truth))
    return worst <= 1e-9, f"orders 2-6 max error {worst:.2e}, d evaluations each"


def check_expectation_decomposition():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(20):
        dim = int(rng.choice([2, 4]))
        G = random_involutory_hermitian(dim, rng)
        C = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        C = C + C.conj().T
        psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        psi /= np.linalg.norm(psi)
        a, b, c = sinusoidal_coefficients(psi, G, C)
        for x in rng.uniform(-np.pi, np.pi, size=5):
            direct = rotation_like_expectation(psi, G, C, x)
            worst = max(worst, abs(direct - (a + b * np.cos(x) + c * np.sin(x))))
    return worst < 1e-12, f"max decomposition deviation {worst:.2e}"


def check_smoothing_unbiased():
    rng = np.random.default_rng(303)
    cfg = SmoothingConfig(sigma=0.1, K=4096)
    x = np.array([0.4, 0.7])

    def u(z):
        return float(z[0] ** 2 + 2.0 * z[1] ** 2)

    grad = smoothed_gradient(u, x, cfg, rng=np.random.default_rng(1))
    lap = smoothed_laplacian(u, x, cfg, rng=np.random.default_rng(2))
    gerr = np.max(np.abs(grad - np.array([2 * x[0], 4 * x[1]])))
    lerr = abs(lap - 6.0)
    ok = gerr < 0.15 and lerr < 1.0
    return ok, f"gradient error {gerr:.3f}, laplacian error {lerr:.3f}"


def check_residual_oracles():
    rng = np.random.default_rng(404)
    poisson = poisson_problem()
    worst = 0.0
    for z in rng.uniform(0.0, 1.0, size=(1000, 2)):
        worst = max(worst, abs(residual(poisson, z, poisson_solution_bundle(z))))
    heat = heat_problem(d=2)
    for z in sample_domain(heat, 1000, rng):
        worst = max(worst, abs(residual(heat, z, heat_solution_bundle(heat, z))))
    return worst < 1e-7, f"max |residual| at analytic solutions {worst:.2e}"


def check_complexity_formulas():
    prof = idealized_profile(d=1, M=2, n_per_d=3, n_r=1, n_e=0)
    if xi(prof, "p_laplace_general", "standard") != 318:
        return False, "d=1 worked example broken"
    for d in range(1, 8):
        prof = idealized_profile(d=d, M=2, n_per_d=3, n_r=1, n_e=0)
        poly = 72 * d**4 + 141 * d**3 + 87 * d**2 + 18 * d
        if xi(prof, "p_laplace_general", "standard") != poly:
            return False, f"coefficient vector broken at d={d}"
    rows = crossover_report(M=2, n_per_d=3, K=1024, n_r=64, n_e=64, d_max=12)
    first_vs = next(r["d"] for r in rows if r["variational_smoothed_lt_variational"])
    first_sm = next(r["d"] for r in rows if r["smoothed_lt_variational"])
    if (first_vs, first_sm) != (9, 10):
        return False, f"crossovers at {(first_vs, first_sm)}, expected (9, 10)"

    problem = poisson_problem()
    rng = np.random.default_rng(505)
    net = build_network(2, 1, 2, "chebyshev_acos", rng)
    cfg = LossConfig("standard", lambda_e=1.0, n_r=3, n_e=2)
    counter = EvalCounter()
    xr = sample_domain(problem, 3, rng)
    xe = sample_boundary(problem, 2, rng)
    _, tape = quantum_loss_shift(net, net.theta, problem, cfg, xr, xe,
                                 counter=counter)
    if counter.count != xi_for(problem, cfg, net):
        return False, "loss-pass counter does not match the closed form"
    theta_gradient(net, tape, counter=counter)
    budget = training_iteration_cost(xi_for(problem, cfg, net), net.n_theta)
    if counter.count != budget:
        return False, "iteration counter does not match xi (1 + 2 N_theta)"
    return True, "worked examples, coefficients, crossovers (9, 10), counters"


# Desk-scale training recipe that reproduces the published Poisson error band;
# the published learning-rate/iteration pair alone moves Adam too little (each
# parameter travels at most lr x iterations) to leave the flat init.
POISSON_RECIPE = dict(
    loss=LossConfig("standard", lambda_e=10.0, n_r=128, n_e=64),
    adam=AdamConfig(learning_rate=5e-3, iterations=4000),
    net=NetworkConfig(n_qubits=6, n_layers=1),
)


def check_poisson_training(workers: int = 1):
    problem = make_problem("poisson")
    results = run_many(problem, "quantum", POISSON_RECIPE["loss"],
                       POISSON_RECIPE["adam"], POISSON_RECIPE["net"],
                       seeds=[1, 2, 3, 4, 5], engine="fast", workers=workers)
    mean, std = aggregate_metric(results)
    return mean <= 0.15, f"L2 relative error {mean:.3f} +/- {std:.3f} (<= 0.15)"


def check_heat_training(workers: int = 1):
    problem = make_problem("heat", d=1)
    results = run_many(problem, "quantum", LossConfig("standard", 500.0, 128, 64),
                       AdamConfig(learning_rate=5e-3, clip=1.0, iterations=1000),
                       NetworkConfig(n_qubits=4, n_layers=1),
                       seeds=[1, 2, 3, 4, 5], engine="fast", workers=workers)
    mean, std = aggregate_metric(results)
    return mean <= 5e-3, f"MSE {mean:.2e} +/- {std:.2e} (<= 5e-3)"


FAST_CHECKS = [
    ("shift rules vs finite differences", check_shift_rules),
    ("arbitrary-order derivative rule", check_arbitrary_order_rule),
    ("expectation decomposition", check_expectation_decomposition),
    ("smoothing estimators", check_smoothing_unbiased),
    ("residual oracles", check_residual_oracles),
    ("evaluation-count formulas", check_complexity_formulas),
]

FULL_CHECKS = [
    ("poisson training reproduction", check_poisson_training),
    ("heat d=1 training reproduction", check_heat_training),
]


def run_verify(level: str = "fast", workers: int = 1):
    if level not in ("fast", "full"):
        raise ValueError(f"unknown verify level '{level}'")
    checks = list(FAST_CHECKS)
    if level == "full":
        checks += [(name, lambda fn=fn: fn(workers=workers))
                   for name, fn in FULL_CHECKS]
    results = []
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(CheckResult(name, ok, detail, time.perf_counter() - t0))
    return results


def format_report(results) -> str:
    lines = []
    for res in results:
        status = "PASS" if res.ok else "FAIL"
        lines.append(f"{status}  {res.name}: {res.detail} [{res.seconds:.1f}s]")
    failed = sum(not r.ok for r in results)
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    return "\n".join(lines)
