"""Loss assembly, Adam optimization, training loops, baselines and metrics.

Losses follow the penalized collocation form

    L = (1/n_r) sum |F(u)(X_r)|  +  (lambda_e/n_e) sum |u(X_e) - h(X_e)|

with F the problem residual, or the variational form whose interior term is
the energy density mean (no absolute value; it may be negative). Both the
absolute value and the ReLU of the classical baseline use subgradient 0 at
their kinks.

Engines: "shift" assembles every quantity from parameter-shift evaluations on
an EvalTape (the reference path, instrumented with evaluation counters),
"fast" differentiates the same state-vector pipeline with autodiff and is the
default for training runs.
"""

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import complexity as cx
from .pde import (
    DerivativeBundle,
    PdeProblem,
    heat_solution_bundle,
    hjb_reference,
    poisson_solution_bundle,
    residual as pde_residual,
    sample_boundary,
    sample_domain,
    variational_density,
)
from .qdiff import (
    EvalCounter,
    EvalTape,
    _lin_sum,
    gradient_quantities,
    hessian_quantities,
    hjb_quantities,
    laplacian_quantities,
    theta_gradient,
)
from .qnet import NetworkSpec, build_network, evaluate
from .smooth import SmoothingConfig, gaussian_draws

FORMULATIONS = ("standard", "variational", "standard_smoothed", "variational_smoothed")
TRIAL_KINDS = ("quantum", "quantum_identity_lambda", "classical")
DEGENERACY_EPS = 1e-12


# ---------------------------------------------------------------------------
# configs


@dataclass
class LossConfig:
    formulation: str = "standard"
    lambda_e: float = 1.0
    n_r: int = 128
    n_e: int = 64
    smoothing: Optional[SmoothingConfig] = None

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation '{self.formulation}'")
        if self.formulation.endswith("_smoothed") and self.smoothing is None:
            raise ValueError("smoothed formulations need a smoothing config")
        if self.lambda_e < 0:
            raise ValueError("lambda_e must be nonnegative")
        if self.n_r < 1 or self.n_e < 1:
            raise ValueError("batch sizes must be positive")

    @property
    def variational(self) -> bool:
        return self.formulation.startswith("variational")

    @property
    def smoothed(self) -> bool:
        return self.formulation.endswith("_smoothed")


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    clip: Optional[float] = None
    iterations: int = 1000


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), t=0)


def adam_step(params, gradient, state: AdamState, cfg: AdamConfig):
    """One Adam update; raw gradient components are clamped to [-clip, clip]
    before entering the moment estimates."""
    g = np.asarray(gradient, dtype=float)
    if cfg.clip is not None:
        g = np.clip(g, -cfg.clip, cfg.clip)
    t = state.t + 1
    m = cfg.beta1 * state.m + (1 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * g * g
    m_hat = m / (1 - cfg.beta1**t)
    v_hat = v / (1 - cfg.beta2**t)
    new_params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return new_params, AdamState(m=m, v=v, t=t)


# ---------------------------------------------------------------------------
# classical random-feature baseline


@dataclass
class ClassicalRandomNet:
    """H_W(x) = sum_i W_i max(0, E_i . x + B_i) with frozen random E, B."""

    E: np.ndarray  # (N, d_in) rows drawn from multivariate t_5(0, I)
    B: np.ndarray  # (N,) Student-t(2) biases
    W: np.ndarray  # (N,) trainable output weights

    @property
    def n_nodes(self) -> int:
        return len(self.B)


def build_classical_net(n_nodes: int, d_in: int, rng: np.random.Generator) -> ClassicalRandomNet:
    z = rng.standard_normal((n_nodes, d_in))
    chi2 = rng.chisquare(5, size=n_nodes)
    E = z / np.sqrt(chi2 / 5.0)[:, None]
    B = rng.standard_t(2, size=n_nodes)
    return ClassicalRandomNet(E=E, B=B, W=np.zeros(n_nodes))


def classical_features(net: ClassicalRandomNet, x):
    pre = net.E @ np.asarray(x, dtype=float) + net.B
    return np.maximum(pre, 0.0), pre > 0


def classical_forward(net: ClassicalRandomNet, x) -> float:
    phi, _ = classical_features(net, x)
    return float(net.W @ phi)


def classical_derivatives(net: ClassicalRandomNet, x) -> DerivativeBundle:
    """Value and almost-everywhere gradient; the ReLU Hessian is zero a.e.,
    so second-order losses use the finite-difference fallback instead."""
    phi, active = classical_features(net, x)
    grad = (net.W * active) @ net.E
    d = net.E.shape[1]
    return DerivativeBundle(value=float(net.W @ phi), gradient=grad,
                            hessian=np.zeros((d, d)), laplacian=0.0)


def classical_basis_fd_laplacian(net: ClassicalRandomNet, x, h: float = 1e-4) -> np.ndarray:
    """Central-difference Laplacian of each ReLU feature; the network output
    is linear in W, so W @ this vector is the network's FD Laplacian."""
    x = np.asarray(x, dtype=float)
    d = len(x)
    pre0 = net.E @ x + net.B
    acc = -2 * d * np.maximum(pre0, 0.0)
    for j in range(d):
        step = net.E[:, j] * h
        acc += np.maximum(pre0 + step, 0.0) + np.maximum(pre0 - step, 0.0)
    return acc / h**2


# ---------------------------------------------------------------------------
# trial adapters (value + derivative bundle providers)


class AnalyticTrial:
    """Exact solution with hand-coded derivatives, for oracle tests."""

    def __init__(self, problem: PdeProblem):
        if problem.kind == "poisson":
            self._bundle = lambda z: poisson_solution_bundle(z)
        elif problem.kind == "heat":
            self._bundle = lambda z: heat_solution_bundle(problem, z)
        else:
            raise ValueError(f"no analytic bundle for '{problem.kind}'")
        self.problem = problem

    def value(self, z) -> float:
        return float(self.problem.solution(z))

    def value_batch(self, pts) -> np.ndarray:
        return np.array([self.value(p) for p in pts])

    def bundle(self, z) -> DerivativeBundle:
        return self._bundle(z)


class QuantumTrial:
    """Network trial over either engine."""

    def __init__(self, net: NetworkSpec, engine: str = "shift", theta=None):
        self.net = net
        self.engine = engine
        self.theta = np.asarray(net.theta if theta is None else theta, dtype=float)
        self._fast = None
        self._vmapped = None
        if engine == "fast":
            from .fastsim import fast_network

            self._fast = fast_network(net)

    def value(self, z) -> float:
        if self._fast is not None:
            return self._fast.value(self.theta, z)
        return evaluate(self.net, z, theta=self.theta)

    def value_batch(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        if self._fast is not None:
            import jax
            import jax.numpy as jnp

            if self._vmapped is None:
                self._vmapped = jax.jit(jax.vmap(self._fast.u, in_axes=(None, 0)))
            return np.asarray(self._vmapped(jnp.asarray(self.theta), jnp.asarray(pts)))
        return np.array([self.value(p) for p in pts])

    def bundle(self, z) -> DerivativeBundle:
        if self._fast is not None:
            g = self._fast.spatial_gradient(self.theta, z)
            H = self._fast.spatial_hessian(self.theta, z)
        else:
            from .qdiff import spatial_gradient, spatial_hessian

            net = self.net.with_theta(self.theta)
            g = spatial_gradient(net, z)
            H = spatial_hessian(net, z)
        return DerivativeBundle(value=self.value(z), gradient=g, hessian=H)


def problem_bundle(trial, problem: PdeProblem, z) -> DerivativeBundle:
    """Adapt a trial's joint-derivative bundle to the problem's residual
    (splitting off the time coordinate for evolution problems)."""
    b = trial.bundle(z)
    if not problem.time_dependent:
        return b
    g = np.asarray(b.gradient)
    out = DerivativeBundle(value=b.value, gradient=g[1:],
                           time_derivative=float(g[0]))
    if b.hessian is not None:
        out.hessian = np.asarray(b.hessian)[1:, 1:]
        out.laplacian = float(np.trace(out.hessian))
    elif b.laplacian is not None:
        out.laplacian = b.laplacian
    return out


class ClassicalTrial:
    def __init__(self, net: ClassicalRandomNet, fd_step: float = 1e-4):
        self.net = net
        self.fd_step = fd_step

    def value(self, z) -> float:
        return classical_forward(self.net, z)

    def value_batch(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        pre = pts @ self.net.E.T + self.net.B
        return np.maximum(pre, 0.0) @ self.net.W

    def bundle(self, z) -> DerivativeBundle:
        b = classical_derivatives(self.net, z)
        b.laplacian = float(self.net.W @ classical_basis_fd_laplacian(
            self.net, z, self.fd_step))
        return b


# ---------------------------------------------------------------------------
# loss values over generic trials


def standard_loss(trial, problem: PdeProblem, batch_r, batch_e, lambda_e: float) -> float:
    if len(batch_r) == 0 or len(batch_e) == 0:
        raise ValueError("empty batch")
    res = 0.0
    for z in batch_r:
        res += abs(pde_residual(problem, z, problem_bundle(trial, problem, z)))
    bdry = 0.0
    for z in batch_e:
        bdry += abs(trial.value(z) - problem.boundary_values(z))
    return res / len(batch_r) + lambda_e * bdry / len(batch_e)


def variational_loss(trial, problem: PdeProblem, batch_r, batch_e, lambda_e: float) -> float:
    if problem.kind not in ("poisson", "p_laplace"):
        raise ValueError("variational loss needs the p-Laplace family")
    if len(batch_r) == 0 or len(batch_e) == 0:
        raise ValueError("empty batch")
    energy = 0.0
    for z in batch_r:
        b = problem_bundle(trial, problem, z)
        energy += variational_density(b, problem.source(z), problem.p)
    bdry = 0.0
    for z in batch_e:
        bdry += abs(trial.value(z) - problem.boundary_values(z))
    return energy / len(batch_r) + lambda_e * bdry / len(batch_e)


# ---------------------------------------------------------------------------
# shift-engine loss assembly (tape-based, exact theta gradients)


def _smoothed_value_lin(tape, x, draws):
    k = len(draws)
    lins = [tape.value(np.asarray(x) + delta) for delta in draws]
    return lins, _lin_sum(tape, [(lin, 1.0 / k) for lin in lins])


def _smoothed_lins(tape, problem, x, cfg: LossConfig, rng, need):
    """Quantity Lins from Gaussian-smoothing estimators sharing one draw set
    per collocation point (common random numbers across estimators)."""
    sm = cfg.smoothing
    x = np.asarray(x, dtype=float)
    dims = len(x)
    draws = gaussian_draws(sm, dims, rng)
    k = sm.K
    lins, value_lin = _smoothed_value_lin(tape, x, draws)
    if sm.antithetic:
        paired = [lins[(i + k // 2) % k] for i in range(k)]
    center = tape.value(x) if (not cfg.variational and sm.antithetic) else None
    out = {}
    if "value" in need:
        out["value"] = value_lin
    spatial = range(1, dims) if problem.time_dependent else range(dims)
    if "grad" in need or "dt" in need:
        comps = {}
        for i in range(dims):
            parts = []
            for idx, delta in enumerate(draws):
                if sm.antithetic:
                    w = delta[i] / (2 * sm.sigma**2) / k
                    parts.append((lins[idx], w))
                    parts.append((paired[idx], -w))
                else:
                    parts.append((lins[idx], delta[i] / sm.sigma**2 / k))
            comps[i] = _lin_sum(tape, parts)
        if "dt" in need:
            out["dt"] = comps[0]
        if "grad" in need:
            out["grad"] = [comps[i] for i in spatial]
    if "lap" in need:
        parts = []
        d_sp = len(list(spatial))
        sp = list(spatial)
        for idx, delta in enumerate(draws):
            w0 = (np.sum(delta[sp] ** 2) - sm.sigma**2 * d_sp)
            if sm.antithetic:
                w = w0 / (2 * sm.sigma**4) / k
                parts.append((lins[idx], w))
                parts.append((paired[idx], w))
                parts.append((center, -2 * w))
            else:
                parts.append((lins[idx], w0 / sm.sigma**4 / k))
        out["lap"] = _lin_sum(tape, parts)
    if "hess" in need:
        hess = {}
        sp = list(spatial)
        for a_pos, i in enumerate(sp):
            for j in sp[a_pos:]:
                parts = []
                for idx, delta in enumerate(draws):
                    w0 = delta[i] * delta[j] - (sm.sigma**2 if i == j else 0.0)
                    if sm.antithetic:
                        w = w0 / (2 * sm.sigma**4) / k
                        parts.append((lins[idx], w))
                        parts.append((paired[idx], w))
                        parts.append((center, -2 * w))
                    else:
                        parts.append((lins[idx], w0 / sm.sigma**4 / k))
                hess[(i - sp[0], j - sp[0])] = _lin_sum(tape, parts)
        out["hess"] = hess
    return out


def _shift_quantities(tape, problem, x, cfg: LossConfig, rng):
    """Quantity Lins the loss term at x needs, via shift rules (or smoothing
    estimators for the *_smoothed formulations)."""
    kind = problem.kind
    d_in = problem.d_in
    if cfg.variational:
        need = {"value", "grad"}
    elif kind in ("poisson", "p_laplace"):
        need = {"lap"} if problem.p == 2.0 else {"grad", "hess"}
    elif kind == "heat":
        need = {"dt", "lap"}
    else:
        need = {"dt", "grad", "lap"}

    if cfg.smoothed:
        return _smoothed_lins(tape, problem, x, cfg, rng, need)

    out = {}
    spatial = list(range(1, d_in)) if problem.time_dependent else list(range(d_in))
    if cfg.variational:
        out["value"] = tape.value(x)
        out["grad"] = gradient_quantities(tape, x, spatial)
        return out
    if kind in ("poisson", "p_laplace"):
        if problem.p == 2.0:
            out["lap"] = laplacian_quantities(tape, x, spatial)
        else:
            hess, grad = hessian_quantities(tape, x)
            out["hess"], out["grad"] = hess, grad
        return out
    if kind == "heat":
        out["dt"] = gradient_quantities(tape, x, [0])[0]
        out["lap"] = laplacian_quantities(tape, x, spatial)
        return out
    dt, grad, lap = hjb_quantities(tape, x)
    out["dt"], out["grad"], out["lap"] = dt, grad, lap
    return out


def _standard_residual_accumulate(problem, q, f_val, scale, diagnostics):
    """Residual value at one point; pushes sign(r)*scale times each quantity's
    partial onto the tape."""
    kind, p = problem.kind, problem.p
    if kind in ("poisson", "p_laplace") and p == 2.0:
        r = q["lap"].value() + f_val
        partials = [(q["lap"], 1.0)]
    elif kind in ("poisson", "p_laplace"):
        g = np.array([lin.value() for lin in q["grad"]])
        d = len(g)
        H = np.zeros((d, d))
        for (i, j), lin in q["hess"].items():
            H[i, j] = H[j, i] = lin.value()
        n2 = float(g @ g)
        norm = np.sqrt(n2)
        lap = float(np.trace(H))
        if norm < DEGENERACY_EPS and p < 4.0:
            if diagnostics is not None:
                diagnostics["degenerate_points"] = diagnostics.get("degenerate_points", 0) + 1
            r = norm ** (p - 2.0) * lap + f_val
            partials = []  # subgradient 0 at the degenerate point
        else:
            quad = float(g @ H @ g)
            pref = n2 ** ((p - 4.0) / 2.0)
            r = pref * (n2 * lap + (p - 2.0) * quad) + f_val
            hg = H @ g
            a_term = n2 * lap + (p - 2.0) * quad
            partials = []
            for (i, j), lin in q["hess"].items():
                if i == j:
                    partials.append((lin, pref * (n2 + (p - 2.0) * g[i] ** 2)))
                else:
                    partials.append((lin, pref * (p - 2.0) * 2.0 * g[i] * g[j]))
            for i, lin in enumerate(q["grad"]):
                dpref = (p - 4.0) * n2 ** ((p - 6.0) / 2.0) * g[i] * a_term
                dmain = pref * (2.0 * g[i] * lap + 2.0 * (p - 2.0) * hg[i])
                partials.append((lin, dpref + dmain))
    elif kind == "heat":
        r = q["lap"].value() - q["dt"].value()
        partials = [(q["lap"], 1.0), (q["dt"], -1.0)]
    else:  # hjb
        g = np.array([lin.value() for lin in q["grad"]])
        r = q["dt"].value() + q["lap"].value() - problem.mu * float(g @ g)
        partials = [(q["dt"], 1.0), (q["lap"], 1.0)]
        partials += [(lin, -2.0 * problem.mu * g[i]) for i, lin in enumerate(q["grad"])]
    w = np.sign(r) * scale
    for lin, partial in partials:
        lin.accumulate(w * partial)
    return abs(r)


def _variational_accumulate(problem, q, f_val, scale):
    p = problem.p
    u = q["value"].value()
    g = np.array([lin.value() for lin in q["grad"]])
    norm = float(np.linalg.norm(g))
    dens = norm**p / p - f_val * u
    q["value"].accumulate(-f_val * scale)
    if norm > 0.0:
        for i, lin in enumerate(q["grad"]):
            lin.accumulate(scale * norm ** (p - 2.0) * g[i])
    return dens


def quantum_loss_shift(net: NetworkSpec, theta, problem: PdeProblem, cfg: LossConfig,
                       batch_r, batch_e, counter: Optional[EvalCounter] = None,
                       rng: Optional[np.random.Generator] = None,
                       diagnostics: Optional[dict] = None):
    """Loss value plus the EvalTape whose node weights realize dL/d(values);
    feed the tape to theta_gradient for the exact parameter gradient."""
    if len(batch_r) == 0 or len(batch_e) == 0:
        raise ValueError("empty batch")
    if cfg.variational and problem.kind not in ("poisson", "p_laplace"):
        raise ValueError("variational loss needs the p-Laplace family")
    tape = EvalTape(net, theta=theta, counter=counter)
    total = 0.0
    scale = 1.0 / len(batch_r)
    for x in batch_r:
        q = _shift_quantities(tape, problem, x, cfg, rng)
        f_val = problem.source(x) if problem.source is not None else 0.0
        if cfg.variational:
            total += scale * _variational_accumulate(problem, q, f_val, scale)
        else:
            total += scale * _standard_residual_accumulate(
                problem, q, f_val, scale, diagnostics)
    bscale = cfg.lambda_e / len(batch_e)
    for z in batch_e:
        if cfg.smoothed:
            draws = gaussian_draws(cfg.smoothing, len(z), rng)
            _, ulin = _smoothed_value_lin(tape, z, draws)
        else:
            ulin = tape.value(z)
        diff = ulin.value() - problem.boundary_values(z)
        total += bscale * abs(diff)
        ulin.accumulate(bscale * np.sign(diff))
    return total, tape


# ---------------------------------------------------------------------------
# fast-engine loss (autodiff, jitted once per run)


def build_fast_loss(fast_net, problem: PdeProblem, cfg: LossConfig):
    import jax
    import jax.numpy as jnp

    if cfg.smoothed:
        raise ValueError("smoothed formulations run on the shift engine")
    if problem.kind == "p_laplace" and problem.p != 2.0 and not cfg.variational:
        raise ValueError("standard p != 2 loss runs on the shift engine")

    u = fast_net.u
    kind, p, mu, lam = problem.kind, problem.p, problem.mu, cfg.lambda_e
    time_dep = problem.time_dependent

    def interior(theta, x, f):
        if cfg.variational:
            g = jax.grad(u, argnums=1)(theta, x)
            n2 = g @ g
            energy = n2 / 2.0 if p == 2.0 else jnp.sqrt(n2) ** p / p
            return energy - f * u(theta, x)
        if kind in ("poisson", "p_laplace"):
            H = jax.hessian(u, argnums=1)(theta, x)
            r = jnp.trace(H) + f
        elif kind == "heat":
            g = jax.grad(u, argnums=1)(theta, x)
            H = jax.hessian(u, argnums=1)(theta, x)
            r = jnp.trace(H[1:, 1:]) - g[0]
        else:  # hjb
            g = jax.grad(u, argnums=1)(theta, x)
            H = jax.hessian(u, argnums=1)(theta, x)
            r = g[0] + jnp.trace(H[1:, 1:]) - mu * (g[1:] @ g[1:])
        return jnp.sign(jax.lax.stop_gradient(r)) * r

    def loss_fn(theta, xr, fr, xe, he):
        inner = jax.vmap(interior, in_axes=(None, 0, 0))(theta, xr, fr)
        ue = jax.vmap(u, in_axes=(None, 0))(theta, xe)
        diff = ue - he
        bterm = jnp.mean(jnp.sign(jax.lax.stop_gradient(diff)) * diff)
        return jnp.mean(inner) + lam * bterm

    return jax.jit(jax.value_and_grad(loss_fn))


# ---------------------------------------------------------------------------
# classical loss and analytic W-gradient


def classical_loss_and_grad(net: ClassicalRandomNet, problem: PdeProblem,
                            cfg: LossConfig, batch_r, batch_e, fd_step: float = 1e-4):
    if problem.kind not in ("poisson", "p_laplace"):
        raise ValueError("classical baseline covers the p-Laplace family")
    W = net.W
    p = problem.p
    total = 0.0
    grad = np.zeros_like(W)
    scale = 1.0 / len(batch_r)
    for x in batch_r:
        phi, active = classical_features(net, x)
        f_val = problem.source(x)
        if cfg.variational:
            gmat = active[:, None] * net.E  # d(grad u)/dW rows
            g = W @ gmat
            norm = float(np.linalg.norm(g))
            total += scale * (norm**p / p - f_val * float(W @ phi))
            if norm > 0.0:
                grad += scale * (norm ** (p - 2.0)) * (gmat @ g)
            grad += scale * (-f_val) * phi
        else:
            if p != 2.0:
                raise ValueError("classical standard loss implemented for p = 2")
            basis_lap = classical_basis_fd_laplacian(net, x, fd_step)
            r = float(W @ basis_lap) + f_val
            total += scale * abs(r)
            grad += scale * np.sign(r) * basis_lap
    bscale = cfg.lambda_e / len(batch_e)
    for z in batch_e:
        phi, _ = classical_features(net, z)
        diff = float(W @ phi) - problem.boundary_values(z)
        total += bscale * abs(diff)
        grad += bscale * np.sign(diff) * phi
    return total, grad


# ---------------------------------------------------------------------------
# metrics


_HJB_REFERENCE_CACHE: dict = {}
HJB_METRIC_MC_SAMPLES = 10**5
_HJB_METRIC_POINT_SEED = 20260101


def hjb_metric_table(problem: PdeProblem, sample_count: int = 1000,
                     mc_samples: int = HJB_METRIC_MC_SAMPLES):
    """Fixed evaluation points with frozen Monte-Carlo reference values,
    shared across seeds so every trial is scored against the same table."""
    key = (problem.d, problem.mu, problem.T, sample_count, mc_samples)
    if key not in _HJB_REFERENCE_CACHE:
        ss = np.random.SeedSequence(_HJB_METRIC_POINT_SEED)
        point_ss, ref_ss = ss.spawn(2)
        pts = sample_domain(problem, sample_count, np.random.default_rng(point_ss))
        refs = np.empty(sample_count)
        for i, (child, z) in enumerate(zip(ref_ss.spawn(sample_count), pts)):
            refs[i] = hjb_reference(problem, z[0], z[1:], mc_samples,
                                    np.random.default_rng(child))
        _HJB_REFERENCE_CACHE[key] = (pts, refs)
    return _HJB_REFERENCE_CACHE[key]


def metrics(trial, problem: PdeProblem, sample_count: int = 1000,
            rng: Optional[np.random.Generator] = None) -> float:
    """Poisson/p-Laplace: L2 relative error on fresh uniform samples;
    heat: MSE on fresh (t,x) samples; hjb: MSE against the frozen
    Monte-Carlo reference table (points fixed across seeds)."""
    if problem.kind in ("poisson", "p_laplace"):
        if problem.solution is None:
            raise ValueError("metric needs an analytic solution")
        pts = rng.uniform(0.0, 1.0, size=(sample_count, problem.d))
        pred = np.asarray(trial.value_batch(pts))
        truth = np.array([problem.solution(z) for z in pts])
        return float(np.sqrt(np.sum((pred - truth) ** 2) / np.sum(truth**2)))
    if problem.kind == "heat":
        if problem.solution is None:
            raise ValueError("metric needs an analytic solution")
        pts = sample_domain(problem, sample_count, rng)
        pred = np.asarray(trial.value_batch(pts))
        truth = np.array([problem.solution(z) for z in pts])
        return float(np.mean((pred - truth) ** 2))
    pts, refs = hjb_metric_table(problem, sample_count)
    pred = np.asarray(trial.value_batch(pts))
    return float(np.mean((pred - refs) ** 2))


# ---------------------------------------------------------------------------
# training loop


@dataclass
class NetworkConfig:
    n_qubits: int = 6
    n_layers: int = 1
    encoding: str = "chebyshev_acos"
    classical_nodes: int = 100


@dataclass
class RunResult:
    seed: int
    losses: np.ndarray
    final_metric: float
    wall_time_s: float
    eval_total: int
    per_iteration_evals: np.ndarray
    per_iteration_wall_ms: np.ndarray
    trial_kind: str
    engine: str
    trial: object = None
    params: Optional[np.ndarray] = None  # trained parameters, picklable


def xi_for(problem: PdeProblem, cfg: LossConfig, net: NetworkSpec) -> int:
    """Per-iteration evaluation count of the loss pass per the closed-form
    metric (used to fill eval counts when the fast engine does not measure)."""
    prof = cx.profile_from_network(net, problem, n_r=cfg.n_r, n_e=cfg.n_e,
                                   K=cfg.smoothing.K if cfg.smoothing else 1024)
    if problem.kind in ("poisson", "p_laplace"):
        pde_kind = "p_laplace_p2" if problem.p == 2.0 else "p_laplace_general"
    else:
        pde_kind = problem.kind
    loss_kind = {
        "standard": "standard",
        "variational": "variational",
        "standard_smoothed": "smoothed",
        "variational_smoothed": "variational_smoothed",
    }[cfg.formulation]
    return cx.xi(prof, pde_kind, loss_kind)


def train(problem: PdeProblem, trial_kind: str, loss_cfg: LossConfig,
          adam_cfg: AdamConfig, net_cfg: NetworkConfig, seed: int,
          engine: str = "fast", metric_samples: int = 1000) -> RunResult:
    """Train one trial: fresh batches each iteration, Adam on the trainable
    parameters, final metric computed on a fresh evaluation sample."""
    if trial_kind not in TRIAL_KINDS:
        raise ValueError(f"unknown trial kind '{trial_kind}'")
    if engine not in ("shift", "fast"):
        raise ValueError(f"unknown engine '{engine}'")
    ss = np.random.SeedSequence(seed)
    net_ss, batch_ss, metric_ss, smooth_ss = ss.spawn(4)
    batch_rng = np.random.default_rng(batch_ss)
    smooth_rng = np.random.default_rng(smooth_ss)

    t_start = time.perf_counter()
    losses = np.empty(adam_cfg.iterations)
    evals = np.zeros(adam_cfg.iterations, dtype=np.int64)
    walls = np.empty(adam_cfg.iterations)

    if trial_kind == "classical":
        net = build_classical_net(net_cfg.classical_nodes, problem.d_in,
                                  np.random.default_rng(net_ss))
        params = net.W.copy()
        state = AdamState.zeros(len(params))
        for it in range(adam_cfg.iterations):
            t0 = time.perf_counter()
            xr = sample_domain(problem, loss_cfg.n_r, batch_rng)
            xe = sample_boundary(problem, loss_cfg.n_e, batch_rng)
            net.W = params
            loss, grad = classical_loss_and_grad(net, problem, loss_cfg, xr, xe)
            params, state = adam_step(params, grad, state, adam_cfg)
            losses[it] = loss
            walls[it] = (time.perf_counter() - t0) * 1e3
        net.W = params
        trial = ClassicalTrial(net)
    else:
        identity = trial_kind == "quantum_identity_lambda"
        net = build_network(net_cfg.n_qubits, net_cfg.n_layers, problem.d_in,
                            net_cfg.encoding, np.random.default_rng(net_ss),
                            identity_lambda=identity)
        params = net.theta.copy()
        state = AdamState.zeros(len(params))
        xi_value = xi_for(problem, loss_cfg, net)
        if engine == "fast":
            from .fastsim import fast_network

            import jax.numpy as jnp

            fn = fast_network(net)
            loss_and_grad = build_fast_loss(fn, problem, loss_cfg)
            for it in range(adam_cfg.iterations):
                t0 = time.perf_counter()
                xr = sample_domain(problem, loss_cfg.n_r, batch_rng)
                xe = sample_boundary(problem, loss_cfg.n_e, batch_rng)
                fr = (np.array([problem.source(z) for z in xr])
                      if problem.source is not None else np.zeros(len(xr)))
                he = np.array([problem.boundary_values(z) for z in xe])
                val, g = loss_and_grad(jnp.asarray(params), jnp.asarray(xr),
                                       jnp.asarray(fr), jnp.asarray(xe),
                                       jnp.asarray(he))
                params, state = adam_step(params, np.asarray(g), state, adam_cfg)
                losses[it] = float(val)
                evals[it] = xi_value * (1 + 2 * net.n_theta)
                walls[it] = (time.perf_counter() - t0) * 1e3
            trial = QuantumTrial(net.with_theta(params), engine="fast")
        else:
            counter = EvalCounter()
            for it in range(adam_cfg.iterations):
                t0 = time.perf_counter()
                before = counter.count
                xr = sample_domain(problem, loss_cfg.n_r, batch_rng)
                xe = sample_boundary(problem, loss_cfg.n_e, batch_rng)
                loss, tape = quantum_loss_shift(net, params, problem, loss_cfg,
                                                xr, xe, counter=counter,
                                                rng=smooth_rng)
                grad = theta_gradient(net, tape, counter=counter)
                params, state = adam_step(params, grad, state, adam_cfg)
                losses[it] = loss
                evals[it] = counter.count - before
                walls[it] = (time.perf_counter() - t0) * 1e3
            trial = QuantumTrial(net.with_theta(params), engine="shift")

    metric = metrics(trial, problem, metric_samples, np.random.default_rng(metric_ss))
    return RunResult(
        seed=seed,
        losses=losses,
        final_metric=metric,
        wall_time_s=time.perf_counter() - t_start,
        eval_total=int(evals.sum()),
        per_iteration_evals=evals,
        per_iteration_wall_ms=walls,
        trial_kind=trial_kind,
        engine=engine,
        trial=trial,
        params=np.asarray(params, dtype=float).copy(),
    )


def run_many(problem: PdeProblem, trial_kind: str, loss_cfg: LossConfig,
             adam_cfg: AdamConfig, net_cfg: NetworkConfig, seeds,
             engine: str = "fast", metric_samples: int = 1000,
             workers: int = 1) -> List[RunResult]:
    """Independent seeds; workers > 1 runs them in separate processes."""
    seeds = list(seeds)
    if workers <= 1 or len(seeds) <= 1:
        return [train(problem, trial_kind, loss_cfg, adam_cfg, net_cfg, s,
                      engine=engine, metric_samples=metric_samples)
                for s in seeds]
    import multiprocessing as mp

    ctx = mp.get_context("spawn")
    args = [(problem, trial_kind, loss_cfg, adam_cfg, net_cfg, s, engine,
             metric_samples) for s in seeds]
    with ctx.Pool(processes=min(workers, len(seeds))) as pool:
        results = pool.starmap(_train_entry, args)
    return results


def _train_entry(problem, trial_kind, loss_cfg, adam_cfg, net_cfg, seed,
                 engine, metric_samples):
    result = train(problem, trial_kind, loss_cfg, adam_cfg, net_cfg, seed,
                   engine=engine, metric_samples=metric_samples)
    result.trial = None  # keep the payload picklable and small
    return result


def aggregate_metric(results: List[RunResult]):
    vals = np.array([r.final_metric for r in results])
    return float(vals.mean()), float(vals.std())


# ---------------------------------------------------------------------------
# delimited outputs


def write_history_csv(path, result: RunResult):
    with open(path, "w") as fh:
        fh.write("iteration,loss,wall_ms,eval_count\n")
        for it, (loss, wall, ev) in enumerate(zip(
                result.losses, result.per_iteration_wall_ms,
                result.per_iteration_evals)):
            fh.write(f"{it},{loss:.17g},{wall:.3f},{ev}\n")


def write_metrics_csv(path, results: List[RunResult]):
    mean, std = aggregate_metric(results)
    with open(path, "w") as fh:
        fh.write("seed,metric,mean,std\n")
        for r in results:
            fh.write(f"{r.seed},{r.final_metric:.17g},{mean:.17g},{std:.17g}\n")
