"""One client's work for a round: report the incoming model's loss, then run
E epochs of mini-batch SGD.

The loss is measured on one deterministically drawn batch of the training
split BEFORE any update, which is the quantity the server aggregates on.
Shuffling and the loss-batch draw are keyed by
(shuffle_seed_base, client_id, round_index), so a round is reproducible in
isolation and independent of any other client's work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models
from .datasets import ClientShard
from .errors import ConfigError, DivergedClientError
from .models import Batch, ModelSpec

PARAM_BYTES = 8  # float64 on the wire
LOSS_BYTES = 8


@dataclass(frozen=True)
class LocalConfig:
    learning_rate: float
    batch_size: int
    local_epochs: int = 1
    shuffle_seed_base: int = 0
    report_full_train_loss: bool = False

    def validate(self) -> None:
        if not (self.learning_rate >= 0) or not np.isfinite(self.learning_rate):
            raise ConfigError("learning_rate must be finite and >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be >= 1")
        if self.shuffle_seed_base < 0:
            raise ConfigError("shuffle_seed_base must be >= 0")


@dataclass
class ClientReport:
    client_id: int
    updated_params: np.ndarray
    reported_loss: float
    samples_used: int
    upload_bytes: int


def _round_rng(cfg: LocalConfig, client_id: int, round_index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence((cfg.shuffle_seed_base, client_id, round_index))
    )


def _loss_batch(shard: ClientShard, cfg: LocalConfig, rng: np.random.Generator) -> Batch:
    n = shard.train.num_samples
    take = min(cfg.batch_size, n)
    idx = rng.choice(n, size=take, replace=False)
    return shard.train.take(idx)


def client_loss_probe(
    shard: ClientShard, spec: ModelSpec, params: np.ndarray, cfg: LocalConfig, round_index: int
) -> float:
    """Loss the client would report for ``params`` at ``round_index``.

    Recomputes exactly the pre-update loss of :func:`local_round` (same rng
    stream, same batch draw) without touching the model.
    """
    rng = _round_rng(cfg, shard.client_id, round_index)
    if cfg.report_full_train_loss:
        return models.loss(spec, params, shard.train)
    return models.loss(spec, params, _loss_batch(shard, cfg, rng))


def client_validation_accuracy(shard: ClientShard, spec: ModelSpec, params: np.ndarray) -> float:
    return models.accuracy(spec, params, shard.validation)


def client_test_accuracy(shard: ClientShard, spec: ModelSpec, params: np.ndarray) -> float:
    return models.accuracy(spec, params, shard.test)


def local_round(
    shard: ClientShard,
    global_params: np.ndarray,
    spec: ModelSpec,
    cfg: LocalConfig,
    round_index: int,
    include_loss_payload: bool = True,
) -> ClientReport:
    """Run one client's round: loss report, then E epochs of mini-batch SGD.

    The incoming ``global_params`` is never mutated.  A trailing mini-batch
    of a single sample is dropped (when batch_size > 1 and it is not the
    only batch of the epoch) to avoid a degenerate gradient scale.
    """
    cfg.validate()
    rng = _round_rng(cfg, shard.client_id, round_index)

    if cfg.report_full_train_loss:
        reported_loss = models.loss(spec, global_params, shard.train)
    else:
        reported_loss = models.loss(spec, global_params, _loss_batch(shard, cfg, rng))
    if not np.isfinite(reported_loss):
        raise DivergedClientError(shard.client_id, round_index, "non-finite reported loss")

    params = np.array(global_params, dtype=np.float64, copy=True)
    n = shard.train.num_samples
    b = cfg.batch_size
    samples_used = 0
    for _ in range(cfg.local_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, b):
            idx = perm[start : start + b]
            if idx.size == 1 and b > 1 and start > 0:
                continue  # lone trailing sample, skip
            value, grad = models.loss_grad(spec, params, shard.train.take(idx))
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise DivergedClientError(
                    shard.client_id, round_index, "non-finite loss/gradient in SGD"
                )
            params -= cfg.learning_rate * grad
            samples_used += int(idx.size)

    upload_bytes = PARAM_BYTES * params.size + (LOSS_BYTES if include_loss_payload else 0)
    return ClientReport(
        client_id=shard.client_id,
        updated_params=params,
        reported_loss=reported_loss,
        samples_used=samples_used,
        upload_bytes=int(upload_bytes),
    )
