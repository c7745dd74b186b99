"""Figure rendering for run directories: loss histories, solution slices and
the evaluation-cost comparison. All figures are written to files (Agg)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_history(path, results, problem) -> str:
    """Per-seed loss curves on a log scale."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for res in results:
        its = np.arange(1, len(res.losses) + 1)
        positive = np.asarray(res.losses) > 0
        if positive.all():
            ax.semilogy(its, res.losses, lw=1.0, label=f"seed {res.seed}")
        else:
            ax.plot(its, res.losses, lw=1.0, label=f"seed {res.seed}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title(f"{problem.name}: training loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def render_slices(path, rows, problem) -> str:
    """Left: trial vs exact snapshots per fixed value; right: squared error."""
    fixed_values = sorted({row["fixed_value"] for row in rows})
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for fv in fixed_values:
        sub = [row for row in rows if row["fixed_value"] == fv]
        xs = np.array([row["x1"] for row in sub])
        order = np.argsort(xs)
        xs = xs[order]
        ut = np.array([row["u_theta"] for row in sub])[order]
        ue = np.array([row["u_exact"] for row in sub])[order]
        sq = np.array([row["squared_error"] for row in sub])[order]
        line, = ax1.plot(xs, ut, lw=1.2, label=f"fixed={fv:g}")
        ax1.plot(xs, ue, lw=0.8, ls="--", color=line.get_color())
        ax2.semilogy(xs, np.maximum(sq, 1e-18), lw=1.2, label=f"fixed={fv:g}")
    ax1.set_xlabel("x1")
    ax1.set_ylabel("u")
    ax1.set_title(f"{problem.name}: trial (solid) vs exact (dashed)")
    ax1.legend(fontsize=8)
    ax2.set_xlabel("x1")
    ax2.set_ylabel("squared error")
    ax2.set_title("pointwise squared error")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def render_crossover(path, rows) -> str:
    """Evaluation counts per loss formulation against the dimension."""
    ds = [row["d"] for row in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key, label in (
        ("xi_standard", "standard"),
        ("xi_variational", "variational"),
        ("xi_smoothed", "smoothed"),
        ("xi_variational_smoothed", "variational smoothed"),
    ):
        ax.semilogy(ds, [row[key] for row in rows], marker="o", ms=3,
                    lw=1.2, label=label)
    ax.set_xlabel("dimension d")
    ax.set_ylabel("evaluations per loss pass")
    ax.set_title("loss evaluation cost by formulation")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)
