"""Experiment harness: TOML run configs, per-problem defaults mirroring the
training tables, checkpoints, and the run-directory artifact writer."""

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import tomli

from . import __version__
from .pde import PdeProblem, make_problem
from .qnet import build_network, from_json, to_json
from .smooth import SmoothingConfig
from .train import (
    AdamConfig,
    AnalyticTrial,
    ClassicalTrial,
    LossConfig,
    NetworkConfig,
    QuantumTrial,
    RunResult,
    aggregate_metric,
    build_classical_net,
    run_many,
    write_history_csv,
    write_metrics_csv,
)

WORKERS_ENV = "QPINN_WORKERS"


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


# ---------------------------------------------------------------------------
# per-problem defaults (the published training tables)

_COMMON_RUN = {
    "trial": "quantum",
    "engine": "fast",
    "seeds": [1, 2, 3, 4, 5],
    "metric_samples": 1000,
    "output_dir": "runs/latest",
}

_DEFAULTS = {
    "poisson": {
        "run": dict(_COMMON_RUN, problem="poisson"),
        "network": {"n_qubits": 6, "n_layers": 1,
                    "encoding": "chebyshev_acos", "classical_nodes": 100},
        "loss": {"formulation": "standard", "lambda_e": 1.0,
                 "n_r": 128, "n_e": 64},
        "adam": {"learning_rate": 1e-3, "beta1": 0.9, "beta2": 0.999,
                 "epsilon": 1e-8, "iterations": 1000},
    },
    "p_laplace": {
        "run": dict(_COMMON_RUN, problem="p_laplace", d=2, p=3.0,
                    engine="shift"),
        "network": {"n_qubits": 4, "n_layers": 1,
                    "encoding": "chebyshev_acos", "classical_nodes": 100},
        "loss": {"formulation": "variational", "lambda_e": 1.0,
                 "n_r": 64, "n_e": 64},
        "adam": {"learning_rate": 1e-3, "beta1": 0.9, "beta2": 0.999,
                 "epsilon": 1e-8, "iterations": 500},
    },
    "heat_d1": {
        "run": dict(_COMMON_RUN, problem="heat", d=1),
        "network": {"n_qubits": 4, "n_layers": 1,
                    "encoding": "chebyshev_acos", "classical_nodes": 100},
        "loss": {"formulation": "standard", "lambda_e": 500.0,
                 "n_r": 128, "n_e": 64},
        "adam": {"learning_rate": 5e-3, "beta1": 0.9, "beta2": 0.999,
                 "epsilon": 1e-8, "clip": 1.0, "iterations": 1000},
    },
    "heat_d2": {
        "run": dict(_COMMON_RUN, problem="heat", d=2),
        "network": {"n_qubits": 6, "n_layers": 2,
                    "encoding": "chebyshev_acos", "classical_nodes": 100},
        "loss": {"formulation": "standard", "lambda_e": 500.0,
                 "n_r": 64, "n_e": 64},
        "adam": {"learning_rate": 5e-3, "beta1": 0.9, "beta2": 0.999,
                 "epsilon": 1e-8, "clip": 1.0, "iterations": 2000},
    },
    "hjb": {
        "run": dict(_COMMON_RUN, problem="hjb", d=2),
        "network": {"n_qubits": 9, "n_layers": 1,
                    "encoding": "tanh", "classical_nodes": 75},
        "loss": {"formulation": "standard", "lambda_e": 500.0,
                 "n_r": 64, "n_e": 64},
        "adam": {"learning_rate": 5e-3, "beta1": 0.9, "beta2": 0.999,
                 "epsilon": 1e-8, "clip": 1.0, "iterations": 750},
    },
}

_RUN_KEYS = {"problem", "d", "p", "a", "T", "mu", "trial", "engine", "seeds",
             "metric_samples", "output_dir"}
_NETWORK_KEYS = {"n_qubits", "n_layers", "encoding", "classical_nodes"}
_LOSS_KEYS = {"formulation", "lambda_e", "n_r", "n_e"}
_ADAM_KEYS = {"learning_rate", "beta1", "beta2", "epsilon", "clip",
              "iterations"}
_SMOOTHING_KEYS = {"sigma", "K", "antithetic"}
_SECTIONS = {"run": _RUN_KEYS, "network": _NETWORK_KEYS, "loss": _LOSS_KEYS,
             "adam": _ADAM_KEYS, "smoothing": _SMOOTHING_KEYS}


@dataclass
class RunConfig:
    problem_kwargs: dict
    trial: str
    engine: str
    seeds: list
    metric_samples: int
    output_dir: str
    net: NetworkConfig
    loss: LossConfig
    adam: AdamConfig

    def problem(self) -> PdeProblem:
        kwargs = dict(self.problem_kwargs)
        name = kwargs.pop("problem")
        return make_problem(name, **kwargs)

    def sections(self) -> dict:
        """The fully resolved config as plain TOML-ready sections."""
        run = dict(self.problem_kwargs)
        run.update(trial=self.trial, engine=self.engine,
                   seeds=list(self.seeds), metric_samples=self.metric_samples,
                   output_dir=self.output_dir)
        out = {
            "run": run,
            "network": {"n_qubits": self.net.n_qubits,
                        "n_layers": self.net.n_layers,
                        "encoding": self.net.encoding,
                        "classical_nodes": self.net.classical_nodes},
            "loss": {"formulation": self.loss.formulation,
                     "lambda_e": self.loss.lambda_e,
                     "n_r": self.loss.n_r, "n_e": self.loss.n_e},
            "adam": {"learning_rate": self.adam.learning_rate,
                     "beta1": self.adam.beta1, "beta2": self.adam.beta2,
                     "epsilon": self.adam.epsilon,
                     "iterations": self.adam.iterations},
        }
        if self.adam.clip is not None:
            out["adam"]["clip"] = self.adam.clip
        if self.loss.smoothing is not None:
            sm = self.loss.smoothing
            out["smoothing"] = {"sigma": sm.sigma, "K": sm.K,
                                "antithetic": sm.antithetic}
        return out


def _default_key(problem: str, d) -> str:
    if problem == "heat":
        return "heat_d1" if int(d or 1) == 1 else "heat_d2"
    return problem


def resolve_config(raw: dict) -> RunConfig:
    """Merge a parsed config onto the per-problem defaults, rejecting any
    section or key the schema does not know ([meta] is free-form)."""
    for section in raw:
        if section == "meta":
            continue
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        for key in raw[section]:
            if key not in _SECTIONS[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
    run_raw = raw.get("run", {})
    problem = run_raw.get("problem", "poisson")
    if problem not in ("poisson", "p_laplace", "heat", "hjb"):
        raise ConfigError(f"unknown problem '{problem}'")
    defaults = _DEFAULTS[_default_key(problem, run_raw.get("d"))]

    merged = {}
    for section in ("run", "network", "loss", "adam"):
        merged[section] = dict(defaults.get(section, {}))
        merged[section].update(raw.get(section, {}))
    run = merged["run"]

    smoothing = None
    if "smoothing" in raw:
        smoothing = SmoothingConfig(
            sigma=float(raw["smoothing"].get("sigma", 0.1)),
            K=int(raw["smoothing"].get("K", 1024)),
            antithetic=bool(raw["smoothing"].get("antithetic", True)),
        )

    problem_kwargs = {"problem": run["problem"]}
    for key in ("d", "p", "a", "T", "mu"):
        if key in run:
            problem_kwargs[key] = run[key]

    try:
        loss = LossConfig(
            formulation=merged["loss"]["formulation"],
            lambda_e=float(merged["loss"]["lambda_e"]),
            n_r=int(merged["loss"]["n_r"]),
            n_e=int(merged["loss"]["n_e"]),
            smoothing=smoothing,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    adam = merged["adam"]
    adam_cfg = AdamConfig(
        learning_rate=float(adam["learning_rate"]),
        beta1=float(adam["beta1"]), beta2=float(adam["beta2"]),
        epsilon=float(adam["epsilon"]),
        clip=float(adam["clip"]) if "clip" in adam and adam["clip"] is not None else None,
        iterations=int(adam["iterations"]),
    )
    net_cfg = NetworkConfig(
        n_qubits=int(merged["network"]["n_qubits"]),
        n_layers=int(merged["network"]["n_layers"]),
        encoding=merged["network"]["encoding"],
        classical_nodes=int(merged["network"]["classical_nodes"]),
    )
    seeds = [int(s) for s in run["seeds"]]
    if not seeds:
        raise ConfigError("seeds list is empty")
    return RunConfig(
        problem_kwargs=problem_kwargs,
        trial=run["trial"],
        engine=run["engine"],
        seeds=seeds,
        metric_samples=int(run["metric_samples"]),
        output_dir=str(run["output_dir"]),
        net=net_cfg,
        loss=loss,
        adam=adam_cfg,
    )


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    return resolve_config(raw)


# ---------------------------------------------------------------------------
# a small TOML writer (manifests reuse the config schema)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__} to TOML")


def dump_toml(sections: dict) -> str:
    lines = []
    for section, table in sections.items():
        lines.append(f"[{section}]")
        for key, value in table.items():
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, cfg: RunConfig, result: RunResult) -> None:
    """Self-contained JSON: the problem, the trained trial, and the metric."""
    payload = {
        "kind": "classical" if result.trial_kind == "classical" else "quantum",
        "problem": dict(cfg.problem_kwargs),
        "engine": result.engine,
        "seed": result.seed,
        "final_metric": result.final_metric,
    }
    problem = cfg.problem()
    ss = np.random.SeedSequence(result.seed)
    net_ss = ss.spawn(4)[0]
    if result.trial_kind == "classical":
        net = build_classical_net(cfg.net.classical_nodes, problem.d_in,
                                  np.random.default_rng(net_ss))
        payload["network"] = {"E": net.E.tolist(), "B": net.B.tolist(),
                              "W": np.asarray(result.params).tolist()}
    else:
        net = build_network(cfg.net.n_qubits, cfg.net.n_layers, problem.d_in,
                            cfg.net.encoding, np.random.default_rng(net_ss),
                            identity_lambda=(result.trial_kind
                                             == "quantum_identity_lambda"))
        net = net.with_theta(np.asarray(result.params))
        payload["network"] = json.loads(to_json(net))
    with open(path, "w") as fh:
        json.dump(payload, fh)


def exact_checkpoint(path, problem_kwargs: dict) -> None:
    """Stub checkpoint whose trial is the analytic solution itself."""
    with open(path, "w") as fh:
        json.dump({"kind": "exact", "problem": dict(problem_kwargs)}, fh)


def load_checkpoint(path):
    """Returns (trial, problem, payload)."""
    with open(path) as fh:
        payload = json.load(fh)
    kwargs = dict(payload["problem"])
    name = kwargs.pop("problem")
    problem = make_problem(name, **kwargs)
    kind = payload["kind"]
    if kind == "exact":
        if problem.solution is None:
            raise ConfigError(
                f"problem '{problem.name}' has no analytic solution")
        return AnalyticTrial(problem), problem, payload
    if kind == "classical":
        from .train import ClassicalRandomNet

        net = ClassicalRandomNet(
            E=np.array(payload["network"]["E"], dtype=float),
            B=np.array(payload["network"]["B"], dtype=float),
            W=np.array(payload["network"]["W"], dtype=float),
        )
        return ClassicalTrial(net), problem, payload
    if kind == "quantum":
        net = from_json(json.dumps(payload["network"]))
        return QuantumTrial(net, engine=payload.get("engine", "fast")), problem, payload
    raise ConfigError(f"unknown checkpoint kind '{kind}'")


# ---------------------------------------------------------------------------
# solution slices

DEFAULT_SLICE_VALUES = (0.0, 0.25, 0.5, 0.75, 1.0)


def compute_slices(trial, problem: PdeProblem, fixed_values=None,
                   points: int = 200):
    """Rows of (x1, fixed_value, u_theta, u_exact, squared_error): the first
    spatial coordinate sweeps [0,1]; every other coordinate (the time
    coordinate for the heat problem) is held at the fixed value."""
    if problem.solution is None:
        raise ConfigError("slices need a problem with an analytic solution")
    if fixed_values is None:
        fixed_values = DEFAULT_SLICE_VALUES
    xs = np.linspace(0.0, 1.0, points)
    rows = []
    for fv in fixed_values:
        pts = np.full((points, problem.d_in), float(fv))
        col = 1 if problem.time_dependent else 0
        pts[:, col] = xs
        pred = np.asarray(trial.value_batch(pts))
        for x1, z, ut in zip(xs, pts, pred):
            ue = float(problem.solution(z))
            rows.append({"x1": float(x1), "fixed_value": float(fv),
                         "u_theta": float(ut), "u_exact": ue,
                         "squared_error": float((ut - ue) ** 2)})
    return rows


def write_slices_csv(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("x1,fixed_value,u_theta,u_exact,squared_error\n")
        for row in rows:
            fh.write(f"{row['x1']:.17g},{row['fixed_value']:.17g},"
                     f"{row['u_theta']:.17g},{row['u_exact']:.17g},"
                     f"{row['squared_error']:.17g}\n")


# ---------------------------------------------------------------------------
# the experiment runner


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def run_experiment(config, workers: Optional[int] = None,
                   render_figures: bool = True) -> dict:
    """Train all seeds of a config; write per-seed history CSVs, checkpoints,
    the aggregate metrics CSV, a rerunnable manifest, and figures."""
    cfg = load_config(config) if not isinstance(config, RunConfig) else config
    if workers is None:
        workers = default_workers()
    problem = cfg.problem()
    os.makedirs(cfg.output_dir, exist_ok=True)

    results = run_many(problem, cfg.trial, cfg.loss, cfg.adam, cfg.net,
                       cfg.seeds, engine=cfg.engine,
                       metric_samples=cfg.metric_samples, workers=workers)

    paths = {"histories": [], "checkpoints": []}
    for res in results:
        hist = os.path.join(cfg.output_dir, f"history_seed{res.seed}.csv")
        write_history_csv(hist, res)
        paths["histories"].append(hist)
        ckpt = os.path.join(cfg.output_dir, f"checkpoint_seed{res.seed}.json")
        save_checkpoint(ckpt, cfg, res)
        paths["checkpoints"].append(ckpt)

    metrics_path = os.path.join(cfg.output_dir, "metrics.csv")
    write_metrics_csv(metrics_path, results)
    paths["metrics"] = metrics_path

    sections = cfg.sections()
    sections["meta"] = {"code_version": __version__,
                        "problem_name": problem.name}
    manifest_path = os.path.join(cfg.output_dir, "manifest.toml")
    with open(manifest_path, "w") as fh:
        fh.write(dump_toml(sections))
    paths["manifest"] = manifest_path

    if render_figures:
        from .figures import render_history

        paths["figures"] = [render_history(
            os.path.join(cfg.output_dir, "history.png"), results, problem)]

    mean, std = aggregate_metric(results)
    paths["mean"] = mean
    paths["std"] = std
    paths["results"] = results
    return paths
