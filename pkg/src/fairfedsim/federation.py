"""Round orchestration: selection, broadcast, local work, weighting,
aggregation, and message accounting.

One round is three steps: (1) the server samples m of the K clients and
broadcasts the current global model; (2) every selected client reports the
model's loss on a drawn batch and uploads its locally updated parameters
(plus the scalar loss, for the loss-weighted strategies); (3) the server
turns the losses into aggregation weights (asking the policy for q when the
dynamic strategy runs) and averages the uploads into the next global model.

Message accounting is exact and platform-independent: a parameter payload is
8 bytes per entry and a scalar loss payload is 8 bytes.  Every selected
client exchanges exactly one downlink and one uplink message per round;
evaluation sweeps and reward bookkeeping are simulator-side measurements and
are deliberately not metered.

With identical seeds a run is bit-reproducible, including under parallel
client execution: client work is pure and reports are merged in ascending
client_id order regardless of completion order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import models
from .aggregation import (
    StrategyConfig,
    aggregate,
    fedavg_weights,
    loss_power_weights,
    weighted_objective,
)
from .agent import (
    AgentConfig,
    EMABaseline,
    PolicyNet,
    Trajectory,
    TrajectoryStep,
    build_state,
    fairness_reward,
    select_action,
)
from .datasets import ClientShard, SynthConfig, generate
from .errors import ConfigError
from .local_training import (
    PARAM_BYTES,
    LocalConfig,
    client_loss_probe,
    client_test_accuracy,
    client_validation_accuracy,
    local_round,
)
from .metrics import per_class_accuracy
from .models import Batch, ModelSpec

ROUNDS_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SeedBundle:
    data: int
    selection: int
    agent: int
    init: int

    def validate(self) -> None:
        for name in ("data", "selection", "agent", "init"):
            if getattr(self, name) < 0:
                raise ConfigError(f"seed {name} must be >= 0")

    def to_dict(self) -> dict:
        return {"data": self.data, "selection": self.selection, "agent": self.agent, "init": self.init}


@dataclass(frozen=True)
class RunConfig:
    rounds: int
    model: ModelSpec
    data: SynthConfig
    local: LocalConfig
    strategy: StrategyConfig
    agent: AgentConfig
    seeds: SeedBundle
    participants: int | None = None
    participation_fraction: float | None = None
    eval_every: int = 10
    parallel: bool = False

    def validate(self) -> None:
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        self.model.validate()
        self.data.validate()
        self.local.validate()
        self.strategy.validate()
        self.agent.validate()
        self.seeds.validate()
        if self.participants is None and self.participation_fraction is None:
            raise ConfigError("one of participants / participation_fraction is required")
        if self.participants is not None and self.participation_fraction is not None:
            raise ConfigError("participants and participation_fraction are mutually exclusive")
        if self.participants is not None and not (1 <= self.participants <= self.data.num_clients):
            raise ConfigError("participants must lie in [1, num_clients]")
        if self.participation_fraction is not None and not (0.0 < self.participation_fraction <= 1.0):
            raise ConfigError("participation_fraction must lie in (0, 1]")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.model.input_dim != self.data.input_dim or self.model.num_classes != self.data.num_classes:
            raise ConfigError("model and data disagree on input_dim/num_classes")

    def resolved_participants(self) -> int:
        if self.participants is not None:
            return self.participants
        return max(math.ceil(self.participation_fraction * self.data.num_clients), 1)


@dataclass
class MessageLedger:
    bytes_down: int = 0
    bytes_up: int = 0
    messages_down: int = 0
    messages_up: int = 0

    def to_dict(self) -> dict:
        return {
            "bytes_down": self.bytes_down,
            "bytes_up": self.bytes_up,
            "messages_down": self.messages_down,
            "messages_up": self.messages_up,
        }


@dataclass
class RoundRecord:
    round_index: int
    selected_clients: list[int]
    reported_losses: list[float]
    q: float
    weights: list[float]
    objective: float
    global_accuracy: float
    bytes_down: int
    bytes_up: int
    messages: int
    reward: float | None = None
    validation_accuracies: list[float] | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": ROUNDS_SCHEMA_VERSION,
            "round": self.round_index,
            "selected_clients": self.selected_clients,
            "reported_losses": self.reported_losses,
            "q": self.q,
            "weights": self.weights,
            "objective": self.objective,
            "global_accuracy": self.global_accuracy,
            "reward": self.reward,
            "validation_accuracies": self.validation_accuracies,
            "bytes_down": self.bytes_down,
            "bytes_up": self.bytes_up,
            "messages": self.messages,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        if d.get("schema_version") != ROUNDS_SCHEMA_VERSION:
            raise ConfigError(f"unsupported round record schema_version {d.get('schema_version')!r}")
        return cls(
            round_index=d["round"],
            selected_clients=d["selected_clients"],
            reported_losses=d["reported_losses"],
            q=d["q"],
            weights=d["weights"],
            objective=d["objective"],
            global_accuracy=d["global_accuracy"],
            reward=d["reward"],
            validation_accuracies=d["validation_accuracies"],
            bytes_down=d["bytes_down"],
            bytes_up=d["bytes_up"],
            messages=d["messages"],
        )


@dataclass
class RunSummary:
    config: RunConfig
    participants: int
    final_params: np.ndarray
    records: list[RoundRecord]
    final_test_accuracies: list[float]
    final_global_accuracy: float
    final_per_class_accuracy: list[float]
    ledger: MessageLedger
    trajectory: Trajectory | None = None


def select_clients(num_clients: int, participants: int, round_index: int, selection_seed: int) -> list[int]:
    """Uniform sample without replacement, deterministic in (seed, round),
    returned sorted ascending."""
    if not (1 <= participants <= num_clients):
        raise ValueError("participants must lie in [1, num_clients]")
    rng = np.random.default_rng(np.random.SeedSequence((selection_seed, round_index)))
    picked = rng.choice(num_clients, size=participants, replace=False)
    return sorted(int(c) for c in picked)


class FederatedRun:
    """Mutable state of one federated training run (one policy episode).

    The orchestrator owns the global model, the ledger and the policy; it
    touches client data only through the client-side entry points
    (local_round and the evaluation probes), never through raw samples.
    """

    def __init__(
        self,
        cfg: RunConfig,
        shards: list[ClientShard],
        server_validation: Batch,
        policy: PolicyNet | None = None,
        baseline: EMABaseline | None = None,
    ):
        cfg.validate()
        self.cfg = cfg
        self.shards = {s.client_id: s for s in shards}
        self.server_validation = server_validation
        self.participants = cfg.resolved_participants()
        self.p_shares = {s.client_id: s.p_k for s in shards}
        self.global_params = models.init_params(cfg.model, cfg.seeds.init)
        self.ledger = MessageLedger()
        self.records: list[RoundRecord] = []
        self.prev_q = 0.0
        self.max_tracked = cfg.agent.state_clients or self.participants

        self.policy: PolicyNet | None = None
        self.baseline: EMABaseline | None = None
        self.trajectory: Trajectory | None = None
        self.agent_rng = np.random.default_rng(np.random.SeedSequence((cfg.seeds.agent, 0x5EED)))
        if cfg.strategy.kind == "dynamic_q":
            state_dim = cfg.agent.state_dim(self.max_tracked)
            self.policy = policy or PolicyNet(
                state_dim, cfg.agent.hidden_dim, len(cfg.agent.q_grid), seed=cfg.seeds.agent
            )
            if self.policy.state_dim != state_dim or self.policy.num_actions != len(cfg.agent.q_grid):
                raise ConfigError("injected policy does not match the agent configuration")
            self.baseline = baseline if baseline is not None else EMABaseline(decay=cfg.agent.baseline_decay)
            self.trajectory = Trajectory()

    # -- per-round protocol --------------------------------------------------

    def _collect_reports(self, selected: list[int], round_index: int):
        include_loss = self.cfg.strategy.kind != "fedavg"

        def work(cid: int):
            return local_round(
                self.shards[cid],
                self.global_params,
                self.cfg.model,
                self.cfg.local,
                round_index,
                include_loss_payload=include_loss,
            )

        if self.cfg.parallel and len(selected) > 1:
            with ThreadPoolExecutor(max_workers=min(8, len(selected))) as pool:
                reports = list(pool.map(work, selected))
        else:
            reports = [work(cid) for cid in selected]
        return sorted(reports, key=lambda r: r.client_id)

    def _choose_weights(self, reports, losses, round_index: int, global_accuracy: float):
        strat = self.cfg.strategy
        if strat.kind == "fedavg":
            return 0.0, fedavg_weights(reports, self.p_shares)
        if strat.kind == "static_q":
            return strat.q, loss_power_weights(reports, self.p_shares, strat.q, strat.loss_floor)
        state = build_state(
            losses,
            self.prev_q,
            round_index,
            self.cfg.rounds,
            self.max_tracked,
            global_accuracy if self.cfg.agent.accuracy_in_state else None,
        )
        q, action_index, log_prob = select_action(
            self.policy, self.cfg.agent.q_grid, state, self.agent_rng, self.cfg.agent.explore
        )
        self.trajectory.append(TrajectoryStep(state, action_index, log_prob))
        return q, loss_power_weights(reports, self.p_shares, q, strat.loss_floor)

    def _check_objective_identity(self, reports, weights, q: float, objective: float) -> None:
        # The per-round objective must equal the explicit ratio form
        # sum_k p_k F^q F / sum_i p_i F^q, recomputed from scratch.
        floor = self.cfg.strategy.loss_floor
        by_id = {r.client_id: r for r in reports}
        num = 0.0
        den = 0.0
        for cid in sorted(by_id):
            f = by_id[cid].reported_loss
            u = self.p_shares[cid] * math.exp(q * math.log(max(f, floor)))
            num += u * f
            den += u
        if not math.isclose(objective, num / den, rel_tol=1e-12, abs_tol=1e-15):
            raise AssertionError("aggregation objective failed its recomputation check")

    def _credit_reward(self, round_index: int, reward: float) -> None:
        self.records[round_index].reward = reward
        if self.trajectory is not None:
            self.trajectory.steps[round_index].reward = reward

    def run_round(self, round_index: int) -> RoundRecord:
        cfg = self.cfg
        if round_index != len(self.records):
            raise ValueError("rounds must be executed in order")
        m = self.participants
        param_bytes = PARAM_BYTES * self.global_params.size

        selected = select_clients(cfg.data.num_clients, m, round_index, cfg.seeds.selection)
        bytes_down = m * param_bytes
        reports = self._collect_reports(selected, round_index)
        losses = [r.reported_loss for r in reports]
        bytes_up = sum(r.upload_bytes for r in reports)

        global_accuracy = models.accuracy(cfg.model, self.global_params, self.server_validation)
        reward_now = fairness_reward(global_accuracy, losses)
        if not cfg.agent.same_step_reward and round_index >= 1:
            self._credit_reward(round_index - 1, reward_now)

        q, weights = self._choose_weights(reports, losses, round_index, global_accuracy)
        objective = weighted_objective(reports, weights)
        self._check_objective_identity(reports, weights, q, objective)
        self.global_params = aggregate(reports, weights)
        self.prev_q = q

        validation_accuracies = None
        if round_index % cfg.eval_every == 0 or round_index == cfg.rounds - 1:
            validation_accuracies = [
                client_validation_accuracy(self.shards[cid], cfg.model, self.global_params)
                for cid in sorted(self.shards)
            ]

        self.ledger.bytes_down += bytes_down
        self.ledger.bytes_up += bytes_up
        self.ledger.messages_down += m
        self.ledger.messages_up += m

        record = RoundRecord(
            round_index=round_index,
            selected_clients=selected,
            reported_losses=losses,
            q=q,
            weights=[weights[cid] for cid in selected],
            objective=objective,
            global_accuracy=global_accuracy,
            reward=reward_now if cfg.agent.same_step_reward else None,
            validation_accuracies=validation_accuracies,
            bytes_down=bytes_down,
            bytes_up=bytes_up,
            messages=2 * m,
        )
        self.records.append(record)
        if self.trajectory is not None and cfg.agent.same_step_reward:
            self.trajectory.steps[round_index].reward = reward_now
        return record

    # -- whole run -------------------------------------------------------------

    def run(self) -> RunSummary:
        cfg = self.cfg
        for t in range(cfg.rounds):
            self.run_round(t)

        final_accuracy = models.accuracy(cfg.model, self.global_params, self.server_validation)
        if not cfg.agent.same_step_reward:
            # The last action's reward mirrors what the next round would have
            # reported: same batch-draw rule, round index T, no training.
            last = self.records[-1]
            probe_losses = [
                client_loss_probe(self.shards[cid], cfg.model, self.global_params, cfg.local, cfg.rounds)
                for cid in last.selected_clients
            ]
            self._credit_reward(cfg.rounds - 1, fairness_reward(final_accuracy, probe_losses))

        final_test = [
            client_test_accuracy(self.shards[cid], cfg.model, self.global_params)
            for cid in sorted(self.shards)
        ]
        per_class = per_class_accuracy(
            self.server_validation.labels,
            models.predict(cfg.model, self.global_params, self.server_validation),
            cfg.model.num_classes,
        )
        return RunSummary(
            config=cfg,
            participants=self.participants,
            final_params=self.global_params,
            records=self.records,
            final_test_accuracies=final_test,
            final_global_accuracy=final_accuracy,
            final_per_class_accuracy=per_class,
            ledger=self.ledger,
            trajectory=self.trajectory,
        )


def run(
    cfg: RunConfig,
    shards: list[ClientShard] | None = None,
    server_validation: Batch | None = None,
    policy: PolicyNet | None = None,
    baseline: EMABaseline | None = None,
) -> RunSummary:
    """Execute a full federated training run.

    Data is generated from ``cfg.data`` (with the bundle's data seed) unless
    shards are injected, which lets callers share one federation across
    strategies or episodes.
    """
    cfg.validate()
    if (shards is None) != (server_validation is None):
        raise ValueError("inject shards and server_validation together")
    if shards is None:
        data_cfg = SynthConfig(**{**asdict(cfg.data), "seed": cfg.seeds.data})
        shards, server_validation = generate(data_cfg)
    return FederatedRun(cfg, shards, server_validation, policy=policy, baseline=baseline).run()
