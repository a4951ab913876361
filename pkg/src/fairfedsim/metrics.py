"""Fairness and performance statistics over per-client accuracies.

Accuracies enter as fractions in [0, 1].  The report expresses mean and
decile columns in percent and the variance in percent^2, which is the scale
used throughout the comparison tables this tool emits.  Jain's index, the
Gini coefficient and the alpha-fairness utility are computed on the raw
fractions (both indices are invariant under positive scaling anyway).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

# Accuracies of exactly 0 are clamped to this floor before the utility sum;
# the utility itself is undefined at x = 0 (ln 0, or division by 0).
UTILITY_FLOOR = 1e-6


def alpha_utility(x: float, alpha: float) -> float:
    """Alpha-fairness utility of a positive allocation x.

    ln(x) when alpha == 1, otherwise x^(1-alpha) / (1-alpha).  The alpha == 1
    branch is exact, not a limit: the two branches as written do not agree as
    alpha -> 1 (the power branch lacks the usual "- 1" in the numerator), and
    no continuity across the branch point is promised.
    """
    if not (x > 0):
        raise ValueError(f"alpha_utility requires x > 0, got {x!r}")
    if not (alpha >= 0) or not math.isfinite(alpha):
        raise ValueError(f"alpha_utility requires finite alpha >= 0, got {alpha!r}")
    if alpha == 1.0:
        return math.log(x)
    return x ** (1.0 - alpha) / (1.0 - alpha)


def jain_index(values) -> float:
    """Jain's fairness index (sum x)^2 / (n * sum x^2), in [1/n, 1].

    Equals 1 iff all values are equal; an all-zero vector is treated as
    perfectly equal.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("jain_index needs at least one value")
    sq = float((x * x).sum())
    if sq == 0.0:
        return 1.0
    total = float(x.sum())
    return total * total / (x.size * sq)


def gini_coefficient(values) -> float:
    """Gini coefficient by the sorted-rank formula, 0 iff all equal."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    if n == 0:
        raise ValueError("gini_coefficient needs at least one value")
    total = float(x.sum())
    if total == 0.0:
        return 0.0
    ranks = np.arange(1, n + 1)
    g = 2.0 * float((ranks * x).sum()) / (n * total) - (n + 1) / n
    return max(0.0, g)


@dataclass(frozen=True)
class FairnessReport:
    """Summary of how evenly a model performs across clients."""

    num_clients: int
    mean_pct: float
    worst10_pct: float
    best10_pct: float
    variance_pct2: float
    jain: float
    gini: float
    alpha: float
    alpha_utility_sum: float

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "FairnessReport":
        return cls(**{f.name: d[f.name] for f in fields(cls)})


def fairness_report(per_client_accuracies, alpha: float = 1.0) -> FairnessReport:
    """Build a :class:`FairnessReport` from per-client accuracy fractions.

    The worst/best "10%" columns average the ceil(K/10) lowest and highest
    clients; with fewer than ten clients that is just the single min/max
    client.  Variance is the population variance, in percent^2.
    """
    accs = np.asarray(per_client_accuracies, dtype=np.float64)
    if accs.size == 0:
        raise ValueError("fairness_report needs at least one accuracy")
    if np.any(accs < 0) or np.any(accs > 1):
        raise ValueError("accuracies must lie in [0, 1]")
    k = accs.size
    decile = math.ceil(k / 10)
    ordered = np.sort(accs)
    pct = accs * 100.0
    usum = float(sum(alpha_utility(max(a, UTILITY_FLOOR), alpha) for a in accs))
    return FairnessReport(
        num_clients=int(k),
        mean_pct=float(pct.mean()),
        worst10_pct=float(ordered[:decile].mean() * 100.0),
        best10_pct=float(ordered[-decile:].mean() * 100.0),
        variance_pct2=float(np.var(pct)),
        jain=jain_index(accs),
        gini=gini_coefficient(accs),
        alpha=float(alpha),
        alpha_utility_sum=usum,
    )


def per_class_accuracy(labels, predictions, num_classes: int) -> list[float]:
    """Recall per class; classes absent from ``labels`` report 0.0."""
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise ValueError("labels and predictions must have the same shape")
    out = []
    for c in range(num_classes):
        mask = labels == c
        out.append(float(np.mean(predictions[mask] == c)) if mask.any() else 0.0)
    return out


def accuracy_histogram(per_client_accuracies, bin_width: float) -> list[tuple[float, float, int]]:
    """Counts of accuracies over fixed-width bins covering [0, 1].

    Returns (bin_low, bin_high, count) triples; the last bin is closed on the
    right so an accuracy of exactly 1.0 is counted.
    """
    if not (bin_width > 0):
        raise ValueError("bin_width must be > 0")
    accs = np.asarray(per_client_accuracies, dtype=np.float64)
    num_bins = max(1, math.ceil(round(1.0 / bin_width, 12)))
    counts = [0] * num_bins
    for a in accs:
        idx = min(int(a / bin_width), num_bins - 1)
        counts[idx] += 1
    return [
        (i * bin_width, min((i + 1) * bin_width, 1.0), counts[i])
        for i in range(num_bins)
    ]
