"""Figure rendering for the report path.

Figures are rendered with the Agg backend straight to PNG files next to the
CSV output.  Nothing time- or host-dependent goes into a figure, so repeated
renders of the same data are byte-identical.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _ensure_dir(path: str) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)


def render_accuracy_histogram(path: str, histogram_data: dict[str, list[tuple[float, float, int]]]) -> None:
    """Grouped bars of final per-client accuracy counts, one group per arm.

    ``histogram_data`` maps arm name -> (bin_low, bin_high, count) triples
    with counts pooled across seeds.
    """
    _ensure_dir(path)
    fig, ax = plt.subplots(figsize=(7.0, 4.0), constrained_layout=True)
    arms = list(histogram_data)
    n_arms = max(1, len(arms))
    for i, arm in enumerate(arms):
        bins = histogram_data[arm]
        if not bins:
            continue
        width = (bins[0][1] - bins[0][0]) / (n_arms + 1)
        lows = [b[0] for b in bins]
        counts = [b[2] for b in bins]
        ax.bar([lo + (i + 0.5) * width for lo in lows], counts, width=width, label=arm)
    ax.set_xlabel("final per-client accuracy")
    ax.set_ylabel("clients")
    ax.set_xlim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_q_trace(path: str, q_trace_data: dict[str, dict[int, list[tuple[int, float]]]]) -> None:
    """Chosen fairness exponent per round, one line per (arm, seed)."""
    _ensure_dir(path)
    fig, ax = plt.subplots(figsize=(7.0, 4.0), constrained_layout=True)
    for arm in q_trace_data:
        for seed in sorted(q_trace_data[arm]):
            trace = q_trace_data[arm][seed]
            ax.plot(
                [t for t, _ in trace],
                [q for _, q in trace],
                alpha=0.7,
                linewidth=1.0,
                label=f"{arm} seed {seed}",
            )
    ax.set_xlabel("round")
    ax.set_ylabel("q")
    ax.grid(True, alpha=0.3)
    if sum(len(v) for v in q_trace_data.values()) <= 10:
        ax.legend(loc="best", fontsize=7)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_learning_curve(path: str, rows: list[tuple[int, float, float]]) -> None:
    """Episode return and the moving baseline over training episodes."""
    _ensure_dir(path)
    fig, ax = plt.subplots(figsize=(7.0, 4.0), constrained_layout=True)
    ax.plot([r[0] for r in rows], [r[1] for r in rows], linewidth=0.8, alpha=0.6, label="return")
    ax.plot([r[0] for r in rows], [r[2] for r in rows], linewidth=1.6, label="baseline")
    ax.set_xlabel("episode")
    ax.set_ylabel("return")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(path, dpi=150)
    plt.close(fig)
