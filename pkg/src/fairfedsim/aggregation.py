"""Per-round aggregation weights and the weighted model average.

Three strategies share one weight formula:

    w_k = p_k * F_k^q / sum_i p_i * F_i^q        over the selected clients,

where p_k is client k's data-size share and F_k its reported loss.  q = 0
reduces exactly to data-size (FedAvg) weighting, a fixed q > 0 is the static
fair baseline, and the dynamic strategy lets a policy pick q every round.
The ratio form cancels any common loss scale, which is what keeps the
useful range of q narrow regardless of the loss magnitude.

Weight computation is deliberately scalar and ordered: clients are always
processed in ascending client_id so results are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .local_training import ClientReport

STRATEGY_KINDS = ("fedavg", "static_q", "dynamic_q")
DEFAULT_LOSS_FLOOR = 1e-8


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    q: float = 1.0  # used by static_q only
    loss_floor: float = DEFAULT_LOSS_FLOOR

    def validate(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ConfigError(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if not math.isfinite(self.q) or self.q < 0:
            raise ConfigError("q must be finite and >= 0")
        if not (0.0 < self.loss_floor <= 1e-3):
            raise ConfigError("loss_floor must lie in (0, 1e-3]")


def _sorted_ids(reports: list[ClientReport]) -> list[int]:
    ids = sorted(r.client_id for r in reports)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate client_id in reports")
    if not ids:
        raise ValueError("need at least one report")
    return ids


def fedavg_weights(reports: list[ClientReport], p: dict[int, float]) -> dict[int, float]:
    """Data-size weights: w_k = s_k / sum of selected s_i (via the p_k shares)."""
    ids = _sorted_ids(reports)
    total = 0.0
    for cid in ids:
        total += p[cid]
    return {cid: p[cid] / total for cid in ids}


def loss_power_weights(
    reports: list[ClientReport],
    p: dict[int, float],
    q: float,
    loss_floor: float = DEFAULT_LOSS_FLOOR,
) -> dict[int, float]:
    """Loss-power weights w_k = p_k * F_k^q / sum_i p_i * F_i^q.

    Losses are floored at ``loss_floor`` before exponentiation so a
    perfectly-fit client keeps a strictly positive weight, and F^q is
    computed as exp(q * ln F) to stay overflow-safe for large q.  At q = 0
    the result is bit-identical to :func:`fedavg_weights`.
    """
    if not math.isfinite(q) or q < 0:
        raise ValueError("q must be finite and >= 0")
    by_id = {r.client_id: r for r in reports}
    ids = _sorted_ids(reports)
    unnorm = {}
    total = 0.0
    for cid in ids:
        f = by_id[cid].reported_loss
        if not math.isfinite(f):
            raise ValueError(f"client {cid} reported a non-finite loss")
        u = p[cid] * math.exp(q * math.log(max(f, loss_floor)))
        unnorm[cid] = u
        total += u
    return {cid: unnorm[cid] / total for cid in ids}


def aggregate(reports: list[ClientReport], weights: dict[int, float]) -> np.ndarray:
    """Convex combination of the clients' updated parameter vectors.

    Summation runs in ascending client_id order so the result does not
    depend on how the reports were collected.
    """
    ids = _sorted_ids(reports)
    if set(weights) != set(ids):
        raise ValueError("weights and reports disagree on the participating clients")
    by_id = {r.client_id: r for r in reports}
    length = by_id[ids[0]].updated_params.shape[0]
    out = np.zeros(length, dtype=np.float64)
    for cid in ids:
        params = by_id[cid].updated_params
        if params.shape != (length,):
            raise ValueError(f"client {cid} parameter vector has mismatched length")
        out += weights[cid] * params
    return out


def weighted_objective(reports: list[ClientReport], weights: dict[int, float]) -> float:
    """sum_k w_k * F_k over the selected clients (ascending client_id)."""
    by_id = {r.client_id: r for r in reports}
    return float(sum(weights[cid] * by_id[cid].reported_loss for cid in sorted(weights)))
