"""Closed-form evaluation-count formulas and the loss-comparison report.

The complexity metric xi counts trial-function evaluations (state-vector
preparations) needed for one pass of a loss over its sample batches. Counts
are driven by the per-coordinate dependency numbers of the angle registry:
alpha[i] sites depend on coordinate i, alpha_mixed[i, j] sites depend on both
i and j (the diagonal therefore repeats alpha), and alpha_t counts
time-dependent sites for evolution problems.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .qnet import NetworkSpec

PDE_KINDS = ("p_laplace_general", "p_laplace_p2", "heat", "hjb")
LOSS_KINDS = ("standard", "variational", "smoothed", "variational_smoothed")


@dataclass
class ComplexityProfile:
    d: int
    alpha: np.ndarray
    alpha_mixed: np.ndarray
    alpha_t: int = 0
    n_r: int = 1
    n_e: int = 0
    K: int = 1024
    commuting: bool = True
    N_theta: int = 0
    n: int = 0
    M: int = 0

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=int)
        self.alpha_mixed = np.asarray(self.alpha_mixed, dtype=int)
        if self.alpha.shape != (self.d,):
            raise ValueError("alpha must have one entry per dimension")
        if self.alpha_mixed.shape != (self.d, self.d):
            raise ValueError("alpha_mixed must be d x d")
        if np.any(self.alpha < 0) or np.any(self.alpha_mixed < 0):
            raise ValueError("dependency counts must be nonnegative")


def _residual_second_order(profile: ComplexityProfile) -> int:
    a = profile.alpha
    am = profile.alpha_mixed
    total = 0
    for i in range(profile.d):
        js = range(i, profile.d) if profile.commuting else range(profile.d)
        for j in js:
            total += 4 * int(a[i]) * int(a[j]) - int(am[i, j])
    return total


def xi(profile: ComplexityProfile, pde_kind: str, loss_kind: str) -> int:
    """Evaluations of u_Theta for one loss pass: n_r residual points plus
    n_e boundary points, each boundary point costing a single evaluation."""
    if pde_kind not in PDE_KINDS:
        raise ValueError(f"unknown pde_kind '{pde_kind}'")
    if loss_kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss_kind '{loss_kind}'")
    if pde_kind in ("heat", "hjb") and loss_kind in ("variational", "variational_smoothed"):
        raise ValueError(f"{loss_kind} loss is not defined for {pde_kind}")

    a = profile.alpha
    n_r, n_e, K = profile.n_r, profile.n_e, profile.K

    if loss_kind == "standard":
        if pde_kind == "p_laplace_general":
            per = _residual_second_order(profile)
        elif pde_kind == "p_laplace_p2":
            per = int(np.sum(4 * a.astype(np.int64) ** 2 - a))
        elif pde_kind == "heat":
            per = 2 * profile.alpha_t + int(np.sum(4 * a.astype(np.int64) ** 2 - a))
        else:  # hjb
            per = 2 * profile.alpha_t + 3 * int(np.sum(a.astype(np.int64) * (2 * a - 1)))
        return n_r * per + n_e

    if loss_kind == "variational":
        return n_r * (1 + 2 * int(np.sum(a))) + n_e

    if loss_kind == "smoothed":
        per = 3 if pde_kind == "p_laplace_p2" else 5
        return K * (per * n_r + n_e)

    # variational_smoothed
    return K * (3 * n_r + n_e)


def training_iteration_cost(xi_value: int, n_theta: int) -> int:
    """Loss pass plus the two-sided shift of every parameter at every
    recorded evaluation: xi * (1 + 2 N_theta)."""
    return xi_value * (1 + 2 * n_theta)


def profile_from_network(net: NetworkSpec, problem=None, n_r: int = 1, n_e: int = 0,
                         K: int = 1024, commuting: bool = True,
                         time_as_dimension: bool = False) -> ComplexityProfile:
    """Count dependency sets in the network's angle registry.

    For time-dependent problems coordinate 0 is time: it becomes alpha_t and
    the remaining coordinates form alpha, unless ``time_as_dimension`` keeps
    the joint convention where t is just another dimension.
    """
    d_in = net.d_in
    deps = [site.dependencies(net.theta) for site in net.sites]
    counts = np.array([sum(1 for s in deps if i in s) for i in range(d_in)], dtype=int)
    mixed = np.zeros((d_in, d_in), dtype=int)
    for i in range(d_in):
        for j in range(d_in):
            mixed[i, j] = sum(1 for s in deps if i in s and j in s)

    time_dependent = bool(problem is not None and getattr(problem, "time_dependent", False))
    if time_dependent and not time_as_dimension:
        alpha_t = int(counts[0])
        alpha = counts[1:]
        alpha_mixed = mixed[1:, 1:]
        d = d_in - 1
    else:
        alpha_t = 0
        alpha = counts
        alpha_mixed = mixed
        d = d_in
    return ComplexityProfile(
        d=d, alpha=alpha, alpha_mixed=alpha_mixed, alpha_t=alpha_t,
        n_r=n_r, n_e=n_e, K=K, commuting=commuting,
        N_theta=net.n_theta, n=net.n_qubits, M=net.n_layers,
    )


def idealized_profile(d: int, M: int, n_per_d: int, n_r: int, n_e: int,
                      K: int = 1024) -> ComplexityProfile:
    """Idealized profile with n = n_per_d * d qubits: every alpha_i equals
    n/d + M n and every alpha_{i,j} (diagonal included) equals M n."""
    n = n_per_d * d
    alpha = np.full(d, n_per_d + M * n, dtype=int)
    alpha_mixed = np.full((d, d), M * n, dtype=int)
    return ComplexityProfile(d=d, alpha=alpha, alpha_mixed=alpha_mixed,
                             n_r=n_r, n_e=n_e, K=K, commuting=True,
                             n=n, M=M)


ORDERING_COLUMNS = [
    ("variational", "standard"),
    ("smoothed", "standard"),
    ("variational_smoothed", "standard"),
    ("smoothed", "variational"),
    ("variational_smoothed", "variational"),
    ("variational_smoothed", "smoothed"),
]


def crossover_report(M: int, n_per_d: int, K: int, n_r: int, n_e: int,
                     d_max: int) -> List[dict]:
    """Four xi values per dimension d = 1..d_max plus pairwise orderings.

    The variational column counts d+1 first-derivative evaluations per
    dimension, n_r (1 + d (d+1) alpha) + n_e, the convention of the explicit
    comparison this report reproduces; the other columns come from xi().
    """
    rows = []
    for d in range(1, d_max + 1):
        prof = idealized_profile(d, M, n_per_d, n_r, n_e, K)
        a = int(prof.alpha[0])
        vals = {
            "standard": xi(prof, "p_laplace_general", "standard"),
            "variational": n_r * (1 + d * (d + 1) * a) + n_e,
            "smoothed": xi(prof, "p_laplace_general", "smoothed"),
            "variational_smoothed": xi(prof, "p_laplace_general", "variational_smoothed"),
        }
        row = {"d": d}
        for k in ("standard", "variational", "smoothed", "variational_smoothed"):
            row[f"xi_{k}"] = vals[k]
        for lo, hi in ORDERING_COLUMNS:
            row[f"{lo}_lt_{hi}"] = vals[lo] < vals[hi]
        rows.append(row)
    return rows


def crossover_csv(rows: List[dict]) -> str:
    header = list(rows[0].keys())
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row[k]) for k in header))
    return "\n".join(lines) + "\n"
