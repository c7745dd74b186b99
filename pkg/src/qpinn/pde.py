"""PDE catalog: problems, residual operators, samplers and references.

Input conventions
-----------------
Stationary problems use points x in (0,1)^d. Time-dependent problems use
stacked inputs z = (t, x_1, ..., x_d), so their networks see d_in = d + 1
features with the time coordinate first.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DEGENERACY_EPS = 1e-12


@dataclass
class DerivativeBundle:
    """Derivatives of a trial function at one point; fill only what the
    residual needs."""

    value: Optional[float] = None
    gradient: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None
    laplacian: Optional[float] = None
    time_derivative: Optional[float] = None

    def lap(self) -> float:
        if self.laplacian is not None:
            return float(self.laplacian)
        return float(np.trace(self.hessian))


@dataclass
class PdeProblem:
    kind: str  # p_laplace | poisson | heat | hjb
    d: int  # spatial dimension
    p: float = 2.0
    T: float = 1.0
    mu: float = 1.0
    a: float = 0.25
    source: Optional[Callable] = None  # f(x)
    solution: Optional[Callable] = None  # exact solution (z or x)
    name: str = ""

    @property
    def time_dependent(self) -> bool:
        return self.kind in ("heat", "hjb")

    @property
    def d_in(self) -> int:
        return self.d + 1 if self.time_dependent else self.d

    def boundary_values(self, z: np.ndarray) -> float:
        """Data matched on the boundary batch: trace of the exact solution
        for the stationary/heat problems, terminal data for hjb."""
        if self.kind == "hjb":
            return hjb_terminal(np.asarray(z)[1:])
        if self.solution is None:
            raise ValueError("problem has no boundary data")
        return self.solution(np.asarray(z))


# ---------------------------------------------------------------------------
# problem factories


def poisson_solution(x) -> float:
    x1, x2 = float(x[0]), float(x[1])
    return np.cos(5 * x1) * np.cos(x2) + x2 / (1 + x1) + 1.0


def poisson_source(x) -> float:
    x1, x2 = float(x[0]), float(x[1])
    return 26.0 * np.cos(x2) * np.cos(5 * x1) - 2.0 * x2 / (1 + x1) ** 3


def poisson_problem() -> PdeProblem:
    return PdeProblem(
        kind="poisson",
        d=2,
        p=2.0,
        source=poisson_source,
        solution=poisson_solution,
        name="poisson",
    )


def _unit_source(x) -> float:
    return 1.0


def _zero_boundary(x) -> float:
    return 0.0


def p_laplace_problem(d: int, p: float, source=None, boundary=None) -> PdeProblem:
    if p <= 1:
        raise ValueError("p must exceed 1")
    prob = PdeProblem(
        kind="p_laplace",
        d=d,
        p=p,
        source=source if source is not None else _unit_source,
        solution=boundary if boundary is not None else _zero_boundary,
        name=f"p_laplace_p{p:g}_d{d}",
    )
    return prob


class HeatSolution:
    """Separable product solution d^{1/d} e^{-a^2 pi^2 d t} prod sin(a pi x_i);
    a picklable callable of z = (t, x)."""

    def __init__(self, d: int, a: float):
        self.d = d
        self.a = a
        self.amp = d ** (1.0 / d)

    def __call__(self, z) -> float:
        z = np.asarray(z, dtype=float)
        t, x = z[0], z[1:]
        return float(self.amp * np.exp(-(self.a**2) * np.pi**2 * self.d * t)
                     * np.prod(np.sin(self.a * np.pi * x)))


def heat_solution_factory(d: int, a: float):
    return HeatSolution(d, a)


def heat_problem(d: int, a: float = 0.25, T: float = 1.0) -> PdeProblem:
    return PdeProblem(
        kind="heat",
        d=d,
        a=a,
        T=T,
        solution=heat_solution_factory(d, a),
        name=f"heat_d{d}",
    )


def hjb_terminal(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.log((1.0 + x @ x) / 2.0))


def hjb_problem(d: int = 2, mu: float = 1.0, T: float = 1.0) -> PdeProblem:
    return PdeProblem(kind="hjb", d=d, mu=mu, T=T, name=f"hjb_d{d}")


PROBLEM_BUILDERS = {
    "poisson": lambda **kw: poisson_problem(),
    "p_laplace": lambda **kw: p_laplace_problem(kw.get("d", 2), kw.get("p", 3.0)),
    "heat": lambda **kw: heat_problem(kw.get("d", 1), kw.get("a", 0.25), kw.get("T", 1.0)),
    "hjb": lambda **kw: hjb_problem(kw.get("d", 2), kw.get("mu", 1.0), kw.get("T", 1.0)),
}


def make_problem(name: str, **kwargs) -> PdeProblem:
    if name not in PROBLEM_BUILDERS:
        raise ValueError(f"unknown problem '{name}'")
    return PROBLEM_BUILDERS[name](**kwargs)


# ---------------------------------------------------------------------------
# residual operators


def p_laplace_residual(bundle: DerivativeBundle, f_val: float, p: float,
                       diagnostics: Optional[dict] = None) -> float:
    """div(|grad u|^{p-2} grad u) + f expanded through the chain rule.

    Near-vanishing gradients with p < 4 drop the ill-defined |grad|^{p-4}
    prefactor and fall back to |grad|^{p-2} * laplacian; occurrences are
    counted in diagnostics["degenerate_points"] when a dict is supplied.
    """
    if p == 2.0:
        return bundle.lap() + f_val
    g = np.asarray(bundle.gradient, dtype=float)
    norm = float(np.linalg.norm(g))
    lap = bundle.lap()
    if norm < DEGENERACY_EPS and p < 4.0:
        if diagnostics is not None:
            diagnostics["degenerate_points"] = diagnostics.get("degenerate_points", 0) + 1
        return norm ** (p - 2.0) * lap + f_val
    H = np.asarray(bundle.hessian, dtype=float)
    quad = float(g @ H @ g)
    return norm ** (p - 4.0) * (norm**2 * lap + (p - 2.0) * quad) + f_val


def variational_density(bundle: DerivativeBundle, f_val: float, p: float) -> float:
    """Energy integrand (1/p)|grad u|^p - f u."""
    g = np.asarray(bundle.gradient, dtype=float)
    return float(np.linalg.norm(g) ** p / p - f_val * bundle.value)


def heat_residual(bundle: DerivativeBundle) -> float:
    return bundle.lap() - float(bundle.time_derivative)


def hjb_residual(bundle: DerivativeBundle, mu: float) -> float:
    g = np.asarray(bundle.gradient, dtype=float)
    return float(bundle.time_derivative) + bundle.lap() - mu * float(g @ g)


def residual(problem: PdeProblem, z: np.ndarray, bundle: DerivativeBundle,
             diagnostics: Optional[dict] = None) -> float:
    if problem.kind in ("poisson", "p_laplace"):
        return p_laplace_residual(bundle, problem.source(z), problem.p, diagnostics)
    if problem.kind == "heat":
        return heat_residual(bundle)
    if problem.kind == "hjb":
        return hjb_residual(bundle, problem.mu)
    raise ValueError(f"unknown problem kind '{problem.kind}'")


# ---------------------------------------------------------------------------
# analytic derivative bundles for the catalog solutions


def poisson_solution_bundle(x) -> DerivativeBundle:
    x1, x2 = float(x[0]), float(x[1])
    c5, s5 = np.cos(5 * x1), np.sin(5 * x1)
    c2, s2 = np.cos(x2), np.sin(x2)
    val = c5 * c2 + x2 / (1 + x1) + 1.0
    grad = np.array([
        -5 * s5 * c2 - x2 / (1 + x1) ** 2,
        -c5 * s2 + 1.0 / (1 + x1),
    ])
    hess = np.array([
        [-25 * c5 * c2 + 2 * x2 / (1 + x1) ** 3, 5 * s5 * s2 - 1.0 / (1 + x1) ** 2],
        [5 * s5 * s2 - 1.0 / (1 + x1) ** 2, -c5 * c2],
    ])
    return DerivativeBundle(value=val, gradient=grad, hessian=hess,
                            laplacian=float(np.trace(hess)))


def heat_solution_bundle(problem: PdeProblem, z) -> DerivativeBundle:
    z = np.asarray(z, dtype=float)
    t, x = z[0], z[1:]
    d, a = problem.d, problem.a
    amp = d ** (1.0 / d) * np.exp(-(a**2) * np.pi**2 * d * t)
    sins = np.sin(a * np.pi * x)
    coss = np.cos(a * np.pi * x)
    prod = np.prod(sins)
    val = amp * prod
    dt = -(a**2) * np.pi**2 * d * val
    grad = np.empty(d)
    for i in range(d):
        others = prod / sins[i] if sins[i] != 0 else np.prod(np.delete(sins, i))
        grad[i] = amp * a * np.pi * coss[i] * others
    lap = -(a**2) * np.pi**2 * d * val
    return DerivativeBundle(value=val, gradient=grad, laplacian=lap, time_derivative=dt)


# ---------------------------------------------------------------------------
# samplers


def sample_domain(problem: PdeProblem, count: int, rng: np.random.Generator) -> np.ndarray:
    """Interior/collocation batch, shape (count, d_in)."""
    if problem.kind in ("poisson", "p_laplace"):
        return rng.uniform(0.0, 1.0, size=(count, problem.d))
    if problem.kind == "heat":
        t = rng.uniform(0.0, problem.T, size=(count, 1))
        x = rng.uniform(0.0, 1.0, size=(count, problem.d))
        return np.concatenate([t, x], axis=1)
    if problem.kind == "hjb":
        t = rng.uniform(0.0, problem.T, size=(count, 1))
        x = rng.standard_normal((count, problem.d))
        return np.concatenate([t, x], axis=1)
    raise ValueError(problem.kind)


def _unit_cube_faces(d: int, count: int, rng: np.random.Generator) -> np.ndarray:
    pts = rng.uniform(0.0, 1.0, size=(count, d))
    faces = rng.integers(0, 2 * d, size=count)
    for k in range(count):
        pts[k, faces[k] // 2] = float(faces[k] % 2)
    return pts


def sample_boundary(problem: PdeProblem, count: int, rng: np.random.Generator) -> np.ndarray:
    """Boundary/initial/terminal batch, shape (count, d_in)."""
    if problem.kind in ("poisson", "p_laplace"):
        return _unit_cube_faces(problem.d, count, rng)
    if problem.kind == "heat":
        n_init = count - count // 2
        init = np.concatenate(
            [np.zeros((n_init, 1)), rng.uniform(0.0, 1.0, size=(n_init, problem.d))],
            axis=1,
        )
        n_side = count // 2
        side = np.concatenate(
            [rng.uniform(0.0, problem.T, size=(n_side, 1)),
             _unit_cube_faces(problem.d, n_side, rng)],
            axis=1,
        )
        return np.concatenate([init, side], axis=0)
    if problem.kind == "hjb":
        x = rng.standard_normal((count, problem.d))
        t = np.full((count, 1), problem.T)
        return np.concatenate([t, x], axis=1)
    raise ValueError(problem.kind)


# ---------------------------------------------------------------------------
# references and bounds


def hjb_reference(problem: PdeProblem, t: float, x, mc_samples: int,
                  rng: np.random.Generator, mode: str = "standard") -> float:
    """Monte-Carlo value of the Cole-Hopf representation
    u(t,x) = -(1/mu) log E[exp(-mu h(x - sqrt(2(T-t)) y))], y ~ N(0, I).

    mode="mu_prefactor" keeps the (2 pi)^{d/2} normalisation constants and
    the mu prefactor written in front of the logarithm instead of 1/mu.
    """
    if mode not in ("standard", "mu_prefactor"):
        raise ValueError(f"unknown mode '{mode}'")
    x = np.asarray(x, dtype=float)
    mu, T, d = problem.mu, problem.T, problem.d
    scale = np.sqrt(max(2.0 * (T - float(t)), 0.0))
    y = rng.standard_normal((int(mc_samples), d))
    pts = x[None, :] - scale * y
    hv = np.log((1.0 + np.sum(pts**2, axis=1)) / 2.0)
    mean = float(np.mean(np.exp(-mu * hv)))
    if mode == "standard":
        return float(-np.log(mean) / mu)
    c = (2.0 * np.pi) ** (d / 2.0)
    return float(-mu / c * np.log(c * mean))


def heat_lipschitz_bound(d: int, a: float) -> float:
    """Closed-form bound on the input-Lipschitz constant of the heat solution,
    evaluated from the (t, x)-derivatives at t=0, x=(1/2,...,1/2) with the
    spatial part aggregated in the 1-norm."""
    s = np.sin(a * np.pi / 2.0)
    c = np.cos(a * np.pi / 2.0)
    amp = d ** (1.0 / d)
    u0 = amp * s**d
    time_part = a**2 * np.pi**2 * d * u0
    space_part = a * np.pi * c * amp * d * s ** (d - 1)
    return float(np.sqrt(time_part**2 + space_part**2))
