"""PNG figures for the CLI report path. Uses the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .cpt import TailCurve  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_weighting_fit(k, target, approx, path, *, baselines=None, title="weighting fit"):
    """Target and fitted weighting on top, absolute errors below (log scale)."""
    fig, (ax, ax_err) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax.plot(k, target, label="target", lw=2)
    ax.plot(k, approx, "--", label="posynomial")
    ax.plot([0, 1], [0, 1], ":", color="grey", lw=0.8)
    ax.set_ylabel("w(k)")
    ax.set_title(title)
    ax.legend()
    floor = 1e-16
    ax_err.semilogy(k, np.maximum(np.abs(approx - target), floor), label="posynomial")
    for name, values in (baselines or {}).items():
        ax_err.semilogy(k, np.maximum(np.abs(values - target), floor), label=name, alpha=0.7)
    ax_err.set_xlabel("k")
    ax_err.set_ylabel("|error|")
    ax_err.legend(fontsize=8)
    _save(fig, path)


def plot_tail_curve(curve: TailCurve, path, *, weighted=None):
    """Step plot of P(X >= y) against y; the shaded area is the expectation."""
    fig, ax = plt.subplots(figsize=(5, 4))
    y = np.concatenate([[0.0], curve.thresholds])
    tails = np.concatenate([curve.tails, [0.0]])
    ax.step(y, tails, where="post", label="P(X >= y)")
    ax.fill_between(y, tails, step="post", alpha=0.25)
    if weighted is not None:
        ax.step(y, np.concatenate([weighted, [0.0]]), where="post", ls="--", label="weighted")
    ax.set_xlabel("y")
    ax.set_ylabel("tail probability")
    ax.set_ylim(0, 1.05)
    ax.legend()
    _save(fig, path)


def plot_ride_table(table, multipliers, path):
    """Ride probability against price multiplier, one line per time step."""
    table = np.asarray(table)
    fig, ax = plt.subplots(figsize=(5, 4))
    for t, row in enumerate(table):
        ax.plot(multipliers, row, marker="o", label=f"t={t + 1}")
    ax.set_xlabel("price multiplier")
    ax.set_ylabel("P(ride)")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_compare(rows, path):
    """Bar charts of crash count and mean cost on successes per pipeline."""
    names = [r["pipeline"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(9, 3.2))
    for ax, key, label in zip(
        axes,
        ("crash_count", "mean_cost_success", "reach_probability"),
        ("crashes", "mean cost on successes", "reach frequency"),
    ):
        ax.bar(names, [r[key] for r in rows], color=["tab:blue", "tab:orange"][: len(rows)])
        ax.set_title(label, fontsize=10)
    _save(fig, path)
