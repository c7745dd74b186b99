"""Figure rendering writes valid PNG files for every report path."""

import numpy as np

from qpinn.complexity import crossover_report
from qpinn.config import compute_slices, exact_checkpoint, load_checkpoint
from qpinn.figures import render_crossover, render_history, render_slices
from qpinn.pde import make_problem
from qpinn.train import RunResult

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _fake_result(seed, losses):
    losses = np.asarray(losses, dtype=float)
    n = len(losses)
    return RunResult(seed=seed, losses=losses, final_metric=0.1,
                     wall_time_s=1.0, eval_total=n,
                     per_iteration_evals=np.ones(n, dtype=int),
                     per_iteration_wall_ms=np.ones(n),
                     trial_kind="quantum", engine="fast")


def test_render_history_positive_losses(tmp_path):
    problem = make_problem("poisson")
    results = [_fake_result(1, [3.0, 2.0, 1.5]),
               _fake_result(2, [2.5, 2.0, 1.0])]
    out = render_history(tmp_path / "h.png", results, problem)
    assert out == str(tmp_path / "h.png")
    assert (tmp_path / "h.png").read_bytes().startswith(PNG_MAGIC)


def test_render_history_signed_losses(tmp_path):
    # variational losses can be negative; the renderer must not log-scale them
    problem = make_problem("poisson")
    results = [_fake_result(1, [1.0, -0.5, -2.0])]
    render_history(tmp_path / "h.png", results, problem)
    assert (tmp_path / "h.png").read_bytes().startswith(PNG_MAGIC)


def test_render_slices(tmp_path):
    ckpt = tmp_path / "exact.json"
    exact_checkpoint(ckpt, {"problem": "heat", "d": 1})
    trial, problem, _ = load_checkpoint(ckpt)
    rows = compute_slices(trial, problem, fixed_values=(0.0, 0.5), points=11)
    render_slices(tmp_path / "s.png", rows, problem)
    assert (tmp_path / "s.png").read_bytes().startswith(PNG_MAGIC)


def test_render_crossover(tmp_path):
    rows = crossover_report(M=2, n_per_d=3, K=1024, n_r=64, n_e=64, d_max=5)
    render_crossover(tmp_path / "c.png", rows)
    assert (tmp_path / "c.png").read_bytes().startswith(PNG_MAGIC)
