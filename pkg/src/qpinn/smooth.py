"""Gaussian smoothing estimators.

Replaces derivatives of a black-box function u with Monte-Carlo estimates of
the derivatives of its Gaussian mollification u_sigma(x) = E[u(x + delta)],
delta ~ N(0, sigma^2 I). Every estimator only ever calls u itself, so the
whole family costs function evaluations instead of shift-rule circuits.

With ``antithetic`` enabled (the default) the K draws are closed under
negation: K/2 iid samples plus their negatives. The paired difference and
second-difference forms then reuse the same u values across the +delta and
-delta points, which both reduces variance and keeps the evaluation budget at
K points per estimator (plus one centre evaluation for second-order forms).
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


@dataclass
class SmoothingConfig:
    sigma: float = 0.1
    K: int = 1024
    antithetic: bool = True

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.antithetic and self.K % 2 != 0:
            raise ValueError("antithetic sampling needs an even K")


def gaussian_draws(cfg: SmoothingConfig, d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the (K, d) perturbation matrix; antithetic sets satisfy
    draws[K//2 + k] == -draws[k]."""
    if cfg.antithetic:
        half = cfg.sigma * rng.standard_normal((cfg.K // 2, d))
        return np.concatenate([half, -half], axis=0)
    return cfg.sigma * rng.standard_normal((cfg.K, d))


def _eval_points(u: Callable, pts: np.ndarray) -> np.ndarray:
    """Evaluate u at each row of pts; honors a vectorized u marked with
    ``u.batched = True``."""
    if getattr(u, "batched", False):
        return np.asarray(u(pts), dtype=float)
    return np.array([float(u(p)) for p in pts], dtype=float)


def _paired(vals: np.ndarray) -> np.ndarray:
    """For an antithetic draw set, vals at -delta_k is vals[(k + K/2) % K]."""
    return np.roll(vals, -(len(vals) // 2))


def smoothed_value(u, x, cfg: SmoothingConfig, rng=None, draws=None) -> float:
    draws = gaussian_draws(cfg, len(x), rng) if draws is None else draws
    vals = _eval_points(u, x + draws)
    return float(np.mean(vals))


def smoothed_gradient(u, x, cfg: SmoothingConfig, rng=None, draws=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    draws = gaussian_draws(cfg, len(x), rng) if draws is None else draws
    vals = _eval_points(u, x + draws)
    if cfg.antithetic:
        diff = vals - _paired(vals)
        return draws.T @ diff / (2 * cfg.sigma**2) / len(draws)
    return draws.T @ vals / cfg.sigma**2 / len(draws)


def smoothed_hessian(u, x, cfg: SmoothingConfig, rng=None, draws=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = len(x)
    draws = gaussian_draws(cfg, d, rng) if draws is None else draws
    vals = _eval_points(u, x + draws)
    eye = np.eye(d)
    if cfg.antithetic:
        u0 = float(u(x))
        second = vals + _paired(vals) - 2 * u0
        scale = 2 * cfg.sigma**4
    else:
        second = vals
        scale = cfg.sigma**4
    acc = np.zeros((d, d))
    for delta, s in zip(draws, second):
        acc += (np.outer(delta, delta) - cfg.sigma**2 * eye) * s
    return acc / scale / len(draws)


def smoothed_laplacian(u, x, cfg: SmoothingConfig, rng=None, draws=None) -> float:
    x = np.asarray(x, dtype=float)
    d = len(x)
    draws = gaussian_draws(cfg, d, rng) if draws is None else draws
    vals = _eval_points(u, x + draws)
    weights = (np.sum(draws**2, axis=1) - cfg.sigma**2 * d)
    if cfg.antithetic:
        u0 = float(u(x))
        second = vals + _paired(vals) - 2 * u0
        return float(weights @ second / (2 * cfg.sigma**4) / len(draws))
    return float(weights @ vals / cfg.sigma**4 / len(draws))


def smoothed_time_derivative(u, t, x, cfg: SmoothingConfig, rng=None, draws=None):
    """Joint estimator over (t, x): returns (d/dt, spatial gradient)."""
    z = np.concatenate([[float(t)], np.asarray(x, dtype=float)])
    g = smoothed_gradient(u, z, cfg, rng=rng, draws=draws)
    return float(g[0]), g[1:]


def lipschitz_diagnostic(u_max: float, sigma: float) -> float:
    """Upper bound on the smoothed function's Lipschitz constant,
    (u_max / sigma) * sqrt(2/pi)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return u_max / sigma * np.sqrt(2.0 / np.pi)


def shot_error_bound(d: int, eps_f: float, sigma: float) -> float:
    """Deterministic part of the gradient-estimator error when each u call
    carries an absolute error up to eps_f."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return np.sqrt(d) * eps_f / sigma
