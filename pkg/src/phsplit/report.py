"""Figure rendering for experiment outputs.

Renders the standard convergence pictures next to the delimited output:
error-versus-iteration decay (with the geometric bound when available),
selected trajectory components against the reference, and the rate curve
q(lambda) with its optimum. Uses the Agg backend; nothing here affects the
numerical artifacts.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .iteration import IterationReport  # noqa: E402
from .waveform import Waveform  # noqa: E402


def render_iteration_figure(report: IterationReport, path, title: str = "") -> None:
    """Semilog error decay per iteration; bound overlaid when finite."""
    ks = [r.k for r in report.records]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    series = [
        ("err_x_l2", [r.err_x_l2 for r in report.records]),
        ("err_z_l2w", [r.err_z_l2w for r in report.records]),
        ("err_Ex_sup", [r.err_Ex_sup for r in report.records]),
    ]
    for label, vals in series:
        vals = np.asarray(vals, dtype=float)
        if np.isfinite(vals).any():
            positive = np.where(vals > 0, vals, np.nan)
            ax.semilogy(ks, positive, marker=".", label=label)
    bound = np.asarray([r.q_bound for r in report.records], dtype=float)
    if np.isfinite(bound).all() and (bound > 0).all():
        ax.semilogy(ks, bound, linestyle="--", color="k", label="q^k bound")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("error")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_trajectory_figure(
    reference: Waveform, path, components=None, iterate: Waveform | None = None, title: str = ""
) -> None:
    """Reference components over time, optionally with the final iterate."""
    comps = list(components) if components is not None else list(range(min(reference.dim, 4)))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    t = reference.grid
    for j in comps:
        ax.plot(t, reference.component(j), label=f"x{j + 1} reference")
        if iterate is not None:
            ax.plot(t, iterate.component(j), linestyle="--", label=f"x{j + 1} iterate")
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_rates_figure(lambdas, qs, lambda_star: float, q_star: float, path, title: str = "") -> None:
    """Rate bound over the lambda grid with the optimum marked."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.semilogx(lambdas, qs, marker=".", label="q(lambda)")
    if np.isfinite(lambda_star):
        ax.axvline(lambda_star, color="k", linestyle="--", alpha=0.6)
        ax.plot([lambda_star], [q_star], marker="*", markersize=11, color="C3",
                label=f"optimum ({lambda_star:.4g}, {q_star:.4g})")
    ax.set_xlabel("lambda")
    ax.set_ylabel("contraction bound q")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
