"""Synthetic non-IID federated dataset generator.

Each client draws its data from its own softmax-linear generating model.
Heterogeneity is controlled by two spreads:

* ``alpha`` scales a per-client perturbation of a shared weight matrix /
  bias (model heterogeneity), so alpha = 0 means every client shares one
  generating model;
* ``beta`` scales a per-client shift of the feature mean (feature
  heterogeneity).

Feature coordinate j has standard deviation j^(-0.6) (variance j^(-1.2)),
labels are the argmax of the generating logits plus a small Gaussian jitter,
and per-client sample counts are drawn log-uniformly in
[samples_min, samples_max] to reproduce heavy size imbalance.  An optional
``label_skew`` in [0, 1] biases each client's label distribution through a
Dirichlet-drawn log-prior added to the logits (0 disables it).

Every client's samples are split 80% / 10% / 10% into train / test /
validation (each split at least one sample), and the server-held global
validation set pools a copy of every client's validation split.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .models import Batch

DATASET_SCHEMA_VERSION = 1
_LABEL_JITTER = 0.1
_SPLIT_TEST = 0.1
_SPLIT_VALIDATION = 0.1


@dataclass(frozen=True)
class SynthConfig:
    num_clients: int
    input_dim: int
    num_classes: int
    alpha: float = 1.0
    beta: float = 1.0
    samples_min: int = 50
    samples_max: int = 400
    label_skew: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.num_clients < 2:
            raise ConfigError("num_clients must be >= 2")
        if self.input_dim < 1 or self.num_classes < 2:
            raise ConfigError("input_dim must be >= 1 and num_classes >= 2")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be >= 0")
        if self.samples_min > self.samples_max:
            raise ConfigError("samples_min must be <= samples_max")
        if self.samples_min < 10:
            raise ConfigError("samples_min must be >= 10 so every split is non-empty")
        if not (0.0 <= self.label_skew <= 1.0):
            raise ConfigError("label_skew must lie in [0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")


@dataclass
class ClientShard:
    """One client's local data plus its size share of the federation."""

    client_id: int
    train: Batch
    test: Batch
    validation: Batch
    s_k: int
    p_k: float


@dataclass(frozen=True)
class ShardStats:
    num_clients: int
    total_samples: int
    min_samples: int
    median_samples: float
    max_samples: int

    def table_row(self, name: str) -> tuple[str, int, int]:
        """Three-column layout (Dataset, Clients, Sample) used in summaries."""
        return (name, self.num_clients, self.total_samples)


def _split_counts(s_k: int) -> tuple[int, int, int]:
    n_test = max(1, round(_SPLIT_TEST * s_k))
    n_val = max(1, round(_SPLIT_VALIDATION * s_k))
    n_train = s_k - n_test - n_val
    if n_train < 1:
        raise ConfigError(f"client size {s_k} cannot be split 80/10/10")
    return n_train, n_test, n_val


def generate(config: SynthConfig) -> tuple[list[ClientShard], Batch]:
    """Generate the federation; returns (shards, server-held validation batch).

    Deterministic in ``config`` including its seed.
    """
    config.validate()
    k, d, c = config.num_clients, config.input_dim, config.num_classes
    children = np.random.SeedSequence(config.seed).spawn(k + 2)
    shared_rng = np.random.default_rng(children[0])
    size_rng = np.random.default_rng(children[1])

    w_shared = shared_rng.standard_normal((d, c))
    b_shared = shared_rng.standard_normal(c)
    feature_scale = np.arange(1, d + 1, dtype=np.float64) ** -0.6

    log_lo, log_hi = math.log(config.samples_min), math.log(config.samples_max)
    sizes = [
        int(np.clip(round(math.exp(u)), config.samples_min, config.samples_max))
        for u in size_rng.uniform(log_lo, log_hi, size=k)
    ]

    shards: list[ClientShard] = []
    total = sum(sizes)
    for cid in range(k):
        rng = np.random.default_rng(children[cid + 2])
        s_k = sizes[cid]
        w_k = w_shared + config.alpha * rng.standard_normal((d, c))
        b_k = b_shared + config.alpha * rng.standard_normal(c)
        mean_k = config.beta * rng.standard_normal(d)

        x = mean_k + rng.standard_normal((s_k, d)) * feature_scale
        logits = x @ w_k + b_k + _LABEL_JITTER * rng.standard_normal((s_k, c))
        if config.label_skew > 0.0:
            conc = max((1.0 - config.label_skew) / config.label_skew, 1e-3)
            class_prior = rng.dirichlet(np.full(c, conc))
            logits = logits + np.log(class_prior + 1e-12)
        y = np.argmax(logits, axis=1)

        n_train, n_test, n_val = _split_counts(s_k)
        shard = ClientShard(
            client_id=cid,
            train=Batch(x[:n_train], y[:n_train]),
            test=Batch(x[n_train : n_train + n_test], y[n_train : n_train + n_test]),
            validation=Batch(x[n_train + n_test :], y[n_train + n_test :]),
            s_k=s_k,
            p_k=s_k / total,
        )
        shards.append(shard)

    server_validation = _pool_validation(shards)
    return shards, server_validation


def _pool_validation(shards: list[ClientShard]) -> Batch:
    ordered = sorted(shards, key=lambda s: s.client_id)
    return Batch(
        np.concatenate([s.validation.features for s in ordered]),
        np.concatenate([s.validation.labels for s in ordered]),
    )


def shard_stats(shards: list[ClientShard]) -> ShardStats:
    if not shards:
        raise ValueError("shard_stats needs at least one shard")
    sizes = [s.s_k for s in shards]
    return ShardStats(
        num_clients=len(shards),
        total_samples=int(sum(sizes)),
        min_samples=int(min(sizes)),
        median_samples=float(np.median(sizes)),
        max_samples=int(max(sizes)),
    )


# ---------------------------------------------------------------------------
# On-disk format: one text file per client split, one sample per line
# ("label f1 ... fd", '%.17g' floats for exact round-trips), plus a JSON
# manifest describing the clients and the generating config.

def _sample_lines(batch: Batch) -> str:
    rows = []
    for label, feats in zip(batch.labels, batch.features):
        rows.append(" ".join([str(int(label))] + ["%.17g" % v for v in feats]))
    return "\n".join(rows) + "\n"


def _parse_samples(path: str, input_dim: int) -> Batch:
    labels, feats = [], []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            if len(parts) != input_dim + 1:
                raise ConfigError(f"{path}: expected 1 label + {input_dim} features per line")
            labels.append(int(parts[0]))
            feats.append([float(p) for p in parts[1:]])
    return Batch(np.array(feats, dtype=np.float64), np.array(labels, dtype=np.int64))


def _client_file(cid: int, split: str) -> str:
    return f"client_{cid:05d}_{split}.txt"


def export_federation(shards: list[ClientShard], config: SynthConfig, out_dir: str) -> str:
    """Write the federation to ``out_dir``; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    clients = []
    for shard in sorted(shards, key=lambda s: s.client_id):
        entry = {"client_id": shard.client_id, "s_k": shard.s_k}
        for split in ("train", "test", "validation"):
            batch: Batch = getattr(shard, split)
            fname = _client_file(shard.client_id, split)
            with open(os.path.join(out_dir, fname), "w", encoding="utf-8", newline="\n") as f:
                f.write(_sample_lines(batch))
            entry[f"{split}_count"] = batch.num_samples
        clients.append(entry)
    manifest = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "config": asdict(config),
        "clients": clients,
        "total_samples": int(sum(s.s_k for s in shards)),
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest_path


def load_federation(dataset_dir: str) -> tuple[list[ClientShard], Batch, SynthConfig]:
    """Load a federation previously written by :func:`export_federation`."""
    manifest_path = os.path.join(dataset_dir, "manifest.json")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read dataset manifest {manifest_path}: {exc}") from exc
    if manifest.get("schema_version") != DATASET_SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported dataset schema_version {manifest.get('schema_version')!r}"
        )
    config = SynthConfig(**manifest["config"])
    config.validate()

    total = sum(entry["s_k"] for entry in manifest["clients"])
    shards = []
    for entry in sorted(manifest["clients"], key=lambda e: e["client_id"]):
        cid = entry["client_id"]
        splits = {}
        for split in ("train", "test", "validation"):
            path = os.path.join(dataset_dir, _client_file(cid, split))
            batch = _parse_samples(path, config.input_dim)
            if batch.num_samples != entry[f"{split}_count"]:
                raise ConfigError(f"{path}: sample count disagrees with manifest")
            splits[split] = batch
        shards.append(
            ClientShard(client_id=cid, s_k=entry["s_k"], p_k=entry["s_k"] / total, **splits)
        )
    return shards, _pool_validation(shards), config
