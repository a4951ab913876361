"""Experiment driver behind the CLI: strict config parsing, multi-seed
strategy comparisons, policy training (including a degenerate bandit mode),
and re-derivable report artifacts.

Every emitted file is schema-versioned and re-parseable by this module:
JSON documents carry a ``schema_version`` field and CSV files start with a
``# schema_version=N`` comment line followed by a frozen header.  Artifacts
contain no timestamps or environment fingerprints, so a repeated invocation
with the same config and seeds reproduces them byte for byte.

Seed handling: every run derives four independent streams (data, selection,
agent, init) from its base seed, and episode indices are folded into the
derivation so multi-episode training is reproducible and resumable.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .aggregation import StrategyConfig
from .agent import (
    AgentConfig,
    EMABaseline,
    PolicyNet,
    Trajectory,
    TrajectoryStep,
    load_checkpoint,
    policy_update,
    save_checkpoint,
    select_action,
)
from .datasets import SynthConfig, export_federation, generate, shard_stats
from .errors import CheckpointWriteError, ConfigError
from .federation import RoundRecord, RunConfig, RunSummary, SeedBundle, run
from .local_training import LocalConfig
from .metrics import FairnessReport, accuracy_histogram, fairness_report
from .models import ModelSpec, write_vector_text

EXPERIMENT_SCHEMA_VERSION = 1
SUMMARY_SCHEMA_VERSION = 1
CSV_SCHEMA_LINE = "# schema_version=1"

COMPARISON_COLUMNS = [
    "arm",
    "kind",
    "static_q",
    "mean_q",
    "participants",
    "rounds",
    "num_seeds",
    "seeds",
    "average_pct_mean",
    "average_pct_std",
    "worst10_pct_mean",
    "worst10_pct_std",
    "best10_pct_mean",
    "best10_pct_std",
    "variance_pct2_mean",
    "variance_pct2_std",
    "jain_mean",
    "jain_std",
    "gini_mean",
    "gini_std",
    "alpha_utility_mean",
    "alpha_utility_std",
    "bytes_down_total",
    "bytes_up_total",
    "messages_total",
]
HISTOGRAM_COLUMNS = ["arm", "seed", "bin_low", "bin_high", "count"]
Q_TRACE_COLUMNS = ["arm", "seed", "round", "q", "reward"]
LEARNING_CURVE_COLUMNS = ["episode", "return", "baseline"]

_SEED_STREAMS = {"data": 0, "selection": 1, "agent": 2, "init": 3}


def derive_stream_seed(base_seed: int, stream: str, episode: int = 0) -> int:
    ss = np.random.SeedSequence((int(base_seed), _SEED_STREAMS[stream], int(episode)))
    return int(ss.generate_state(1)[0])


def seed_bundle(base_seed: int, episode: int, share_data: bool) -> SeedBundle:
    data_episode = 0 if share_data else episode
    return SeedBundle(
        data=derive_stream_seed(base_seed, "data", data_episode),
        selection=derive_stream_seed(base_seed, "selection", episode),
        agent=derive_stream_seed(base_seed, "agent", episode),
        init=derive_stream_seed(base_seed, "init", data_episode),
    )


# ---------------------------------------------------------------------------
# Config parsing (strict: unknown keys are errors)


@dataclass(frozen=True)
class Arm:
    name: str
    strategy: StrategyConfig
    participants: int | None = None


@dataclass
class ExperimentConfig:
    raw: dict
    rounds: int | None = None
    participants: int | None = None
    participation_fraction: float | None = None
    episodes: int = 1
    seeds: list[int] = field(default_factory=lambda: [0])
    share_data_across_episodes: bool = True
    eval_every: int = 10
    parallel: bool = False
    fairness_alpha: float = 1.0
    histogram_bin_width: float = 0.1
    checkpoint_every: int = 50
    model: ModelSpec | None = None
    data: SynthConfig | None = None
    local: LocalConfig | None = None
    strategy: StrategyConfig | None = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    comparison: list[Arm] = field(default_factory=list)

    def arms(self) -> list[Arm]:
        if self.comparison:
            return self.comparison
        if self.strategy is None:
            raise ConfigError("config needs either 'strategy' or a 'comparison' list")
        return [Arm(name=_default_arm_name(self.strategy), strategy=self.strategy)]

    def require_federation(self) -> None:
        missing = [
            name
            for name, value in (("rounds", self.rounds), ("model", self.model),
                                ("data", self.data), ("local", self.local))
            if value is None
        ]
        if missing:
            raise ConfigError(f"config is missing required keys: {', '.join(missing)}")
        if self.participants is None and self.participation_fraction is None:
            raise ConfigError("config needs 'participants' or 'participation_fraction'")


def _default_arm_name(strategy: StrategyConfig) -> str:
    if strategy.kind == "static_q":
        return f"static_q_{strategy.q:g}"
    return strategy.kind


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {', '.join(unknown)}")


def _strategy_from(d: dict, where: str) -> StrategyConfig:
    _check_keys(d, {"kind", "q", "loss_floor"}, where)
    strat = StrategyConfig(**d)
    strat.validate()
    return strat


def parse_experiment_config(raw: dict) -> ExperimentConfig:
    top_keys = {
        "schema_version", "rounds", "participants", "participation_fraction",
        "episodes", "seeds", "share_data_across_episodes", "eval_every",
        "parallel", "fairness_alpha", "histogram_bin_width", "checkpoint_every",
        "model", "data", "local", "strategy", "agent", "comparison",
    }
    _check_keys(raw, top_keys, "config")
    if raw.get("schema_version", EXPERIMENT_SCHEMA_VERSION) != EXPERIMENT_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {raw.get('schema_version')!r}")

    cfg = ExperimentConfig(raw=raw)
    cfg.rounds = raw.get("rounds")
    cfg.participants = raw.get("participants")
    cfg.participation_fraction = raw.get("participation_fraction")
    cfg.episodes = raw.get("episodes", 1)
    if not isinstance(cfg.episodes, int) or cfg.episodes < 1:
        raise ConfigError("episodes must be an integer >= 1")
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers >= 0")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    cfg.seeds = seeds
    cfg.share_data_across_episodes = bool(raw.get("share_data_across_episodes", True))
    cfg.eval_every = raw.get("eval_every", 10)
    cfg.parallel = bool(raw.get("parallel", False))
    cfg.fairness_alpha = float(raw.get("fairness_alpha", 1.0))
    cfg.histogram_bin_width = float(raw.get("histogram_bin_width", 0.1))
    if not (cfg.histogram_bin_width > 0):
        raise ConfigError("histogram_bin_width must be > 0")
    cfg.checkpoint_every = raw.get("checkpoint_every", 50)
    if not isinstance(cfg.checkpoint_every, int) or cfg.checkpoint_every < 1:
        raise ConfigError("checkpoint_every must be an integer >= 1")

    if "model" in raw:
        _check_keys(raw["model"], {"kind", "input_dim", "num_classes", "hidden_dim", "weight_init_scale"}, "model")
        cfg.model = ModelSpec(**raw["model"])
        cfg.model.validate()
    if "data" in raw:
        _check_keys(
            raw["data"],
            {"num_clients", "input_dim", "num_classes", "alpha", "beta",
             "samples_min", "samples_max", "label_skew", "seed"},
            "data",
        )
        cfg.data = SynthConfig(**raw["data"])
        cfg.data.validate()
    if "local" in raw:
        _check_keys(
            raw["local"],
            {"learning_rate", "batch_size", "local_epochs", "shuffle_seed_base", "report_full_train_loss"},
            "local",
        )
        cfg.local = LocalConfig(**raw["local"])
        cfg.local.validate()
    if "strategy" in raw:
        cfg.strategy = _strategy_from(raw["strategy"], "strategy")
    if "agent" in raw:
        _check_keys(
            raw["agent"],
            {"q_grid", "hidden_dim", "learning_rate", "discount", "baseline_decay",
             "explore", "state_clients", "accuracy_in_state", "same_step_reward"},
            "agent",
        )
        agent_kwargs = dict(raw["agent"])
        if "q_grid" in agent_kwargs:
            agent_kwargs["q_grid"] = tuple(float(v) for v in agent_kwargs["q_grid"])
        cfg.agent = AgentConfig(**agent_kwargs)
        cfg.agent.validate()

    arms: list[Arm] = []
    for i, entry in enumerate(raw.get("comparison", [])):
        _check_keys(entry, {"name", "kind", "q", "loss_floor", "participants"}, f"comparison[{i}]")
        strat_dict = {k: entry[k] for k in ("kind", "q", "loss_floor") if k in entry}
        strategy = _strategy_from(strat_dict, f"comparison[{i}]")
        name = entry.get("name", _default_arm_name(strategy))
        arms.append(Arm(name=name, strategy=strategy, participants=entry.get("participants")))
    names = [a.name for a in arms]
    if len(set(names)) != len(names):
        raise ConfigError("comparison arm names must be unique")
    cfg.comparison = arms
    return cfg


def load_experiment_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_experiment_config(raw)


# ---------------------------------------------------------------------------
# Artifact writers / readers


def _fmt(x) -> str:
    if isinstance(x, float):
        return "%.12g" % x
    return str(x)


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _write_csv(path: str, columns: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(CSV_SCHEMA_LINE + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
        if first != CSV_SCHEMA_LINE:
            raise ConfigError(f"{path}: missing schema line {CSV_SCHEMA_LINE!r}")
        reader = csv.reader(f)
        rows = [row for row in reader if row]
    return rows[0], rows[1:]


def write_rounds_jsonl(path: str, records: list[RoundRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


def read_rounds_jsonl(path: str) -> list[RoundRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(RoundRecord.from_dict(json.loads(line)))
    return records


# ---------------------------------------------------------------------------
# Running experiments


def _arm_run_config(cfg: ExperimentConfig, arm: Arm, bundle: SeedBundle, parallel: bool) -> RunConfig:
    participants = arm.participants if arm.participants is not None else cfg.participants
    fraction = None if arm.participants is not None else cfg.participation_fraction
    return RunConfig(
        rounds=cfg.rounds,
        model=cfg.model,
        data=cfg.data,
        local=cfg.local,
        strategy=arm.strategy,
        agent=cfg.agent,
        seeds=bundle,
        participants=participants,
        participation_fraction=fraction,
        eval_every=cfg.eval_every,
        parallel=parallel,
    )


def _run_arm_seed(cfg: ExperimentConfig, arm: Arm, base_seed: int, parallel: bool) -> RunSummary:
    """Run one (arm, seed) cell; dynamic arms train across cfg.episodes."""
    episodes = cfg.episodes if arm.strategy.kind == "dynamic_q" else 1
    policy = None
    baseline = None
    summary = None
    for episode in range(episodes):
        bundle = seed_bundle(base_seed, episode, cfg.share_data_across_episodes)
        run_cfg = _arm_run_config(cfg, arm, bundle, parallel)
        if arm.strategy.kind == "dynamic_q" and policy is None:
            state_dim = cfg.agent.state_dim(cfg.agent.state_clients or run_cfg.resolved_participants())
            policy = PolicyNet(state_dim, cfg.agent.hidden_dim, len(cfg.agent.q_grid), seed=bundle.agent)
            baseline = EMABaseline(decay=cfg.agent.baseline_decay)
        summary = run(run_cfg, policy=policy, baseline=baseline)
        if summary.trajectory is not None and episodes > 1:
            policy_update(policy, summary.trajectory, cfg.agent.learning_rate, baseline, cfg.agent.discount)
    return summary


def _summary_dict(cfg: ExperimentConfig, arm: Arm, base_seed: int, summary: RunSummary) -> dict:
    report = fairness_report(summary.final_test_accuracies, cfg.fairness_alpha)
    qs = [r.q for r in summary.records]
    return {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "arm": arm.name,
        "strategy": {"kind": arm.strategy.kind, "q": arm.strategy.q, "loss_floor": arm.strategy.loss_floor},
        "base_seed": base_seed,
        "episodes": cfg.episodes if arm.strategy.kind == "dynamic_q" else 1,
        "seed_bundle": summary.config.seeds.to_dict(),
        "rounds": summary.config.rounds,
        "participants": summary.participants,
        "num_clients": summary.config.data.num_clients,
        "param_count": int(summary.final_params.size),
        "mean_q": float(np.mean(qs)),
        "final_test_accuracies": summary.final_test_accuracies,
        "final_global_accuracy": summary.final_global_accuracy,
        "final_per_class_accuracy": summary.final_per_class_accuracy,
        "fairness": report.to_dict(),
        "ledger": summary.ledger.to_dict(),
        "final_model_file": "final_model.txt",
    }


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str,
    parallel: bool | None = None,
    seed_override: list[int] | None = None,
) -> dict:
    """Execute every (arm, seed) cell and write the full artifact tree."""
    cfg.require_federation()
    seeds = seed_override if seed_override is not None else cfg.seeds
    parallel = cfg.parallel if parallel is None else parallel
    arms = cfg.arms()

    os.makedirs(out_dir, exist_ok=True)
    _write_json(
        os.path.join(out_dir, "experiment.json"),
        {
            "schema_version": EXPERIMENT_SCHEMA_VERSION,
            "mode": "run",
            "config": cfg.raw,
            "arms": [
                {
                    "name": a.name,
                    "kind": a.strategy.kind,
                    "static_q": a.strategy.q if a.strategy.kind == "static_q" else None,
                    "participants": a.participants,
                }
                for a in arms
            ],
            "seeds": seeds,
            "parallel": parallel,
            "fairness_alpha": cfg.fairness_alpha,
            "histogram_bin_width": cfg.histogram_bin_width,
        },
    )

    for arm in arms:
        for base_seed in seeds:
            summary = _run_arm_seed(cfg, arm, base_seed, parallel)
            run_dir = os.path.join(out_dir, "runs", arm.name, f"seed_{base_seed}")
            os.makedirs(run_dir, exist_ok=True)
            write_rounds_jsonl(os.path.join(run_dir, "rounds.jsonl"), summary.records)
            _write_json(os.path.join(run_dir, "summary.json"), _summary_dict(cfg, arm, base_seed, summary))
            write_vector_text(os.path.join(run_dir, "final_model.txt"), summary.final_params)
    return derive_report(out_dir)


# ---------------------------------------------------------------------------
# Report derivation (shared by `run` and `report`)


def _load_cell(out_dir: str, arm_name: str, seed: int) -> tuple[dict, list[RoundRecord]]:
    run_dir = os.path.join(out_dir, "runs", arm_name, f"seed_{seed}")
    summary = read_json(os.path.join(run_dir, "summary.json"))
    if summary.get("schema_version") != SUMMARY_SCHEMA_VERSION:
        raise ConfigError(f"unsupported summary schema_version in {run_dir}")
    records = read_rounds_jsonl(os.path.join(run_dir, "rounds.jsonl"))
    return summary, records


def derive_report(out_dir: str) -> dict:
    """Rebuild comparison.csv, histogram.csv, q_trace.csv and the figures
    from the stored per-run artifacts."""
    manifest = read_json(os.path.join(out_dir, "experiment.json"))
    if manifest.get("schema_version") != EXPERIMENT_SCHEMA_VERSION:
        raise ConfigError(f"unsupported experiment schema_version in {out_dir}")
    arms = manifest["arms"]
    seeds = manifest["seeds"]
    alpha = manifest["fairness_alpha"]
    bin_width = manifest["histogram_bin_width"]

    comparison_rows = []
    histogram_rows = []
    q_trace_rows = []
    histogram_data: dict[str, list[tuple[float, float, int]]] = {}
    q_trace_data: dict[str, dict[int, list[tuple[int, float]]]] = {}

    for arm in arms:
        name = arm["name"]
        reports: list[FairnessReport] = []
        mean_qs = []
        ledgers = []
        rounds_count = None
        participants = None
        q_trace_data[name] = {}
        bin_totals: dict[int, int] = {}
        for seed in seeds:
            summary, records = _load_cell(out_dir, name, seed)
            reports.append(fairness_report(summary["final_test_accuracies"], alpha))
            mean_qs.append(summary["mean_q"])
            ledgers.append(summary["ledger"])
            rounds_count = summary["rounds"]
            participants = summary["participants"]
            for low, high, count in accuracy_histogram(summary["final_test_accuracies"], bin_width):
                histogram_rows.append([name, seed, low, high, count])
                key = round(low / bin_width)
                bin_totals[key] = bin_totals.get(key, 0) + count
            q_trace_data[name][seed] = [(r.round_index, r.q) for r in records]
            for r in records:
                q_trace_rows.append([name, seed, r.round_index, r.q, r.reward])
        histogram_data[name] = [
            (k * bin_width, min((k + 1) * bin_width, 1.0), bin_totals[k]) for k in sorted(bin_totals)
        ]

        if len({(l["bytes_down"], l["bytes_up"], l["messages_down"] + l["messages_up"]) for l in ledgers}) != 1:
            raise ConfigError(f"arm {name}: message totals differ across seeds")
        ledger = ledgers[0]

        def col(getter):
            vals = np.array([getter(r) for r in reports], dtype=np.float64)
            return float(vals.mean()), float(vals.std())

        avg_m, avg_s = col(lambda r: r.mean_pct)
        w_m, w_s = col(lambda r: r.worst10_pct)
        b_m, b_s = col(lambda r: r.best10_pct)
        v_m, v_s = col(lambda r: r.variance_pct2)
        j_m, j_s = col(lambda r: r.jain)
        g_m, g_s = col(lambda r: r.gini)
        u_m, u_s = col(lambda r: r.alpha_utility_sum)
        comparison_rows.append(
            [
                name,
                arm["kind"],
                "" if arm.get("static_q") is None else _fmt(float(arm["static_q"])),
                float(np.mean(mean_qs)),
                participants,
                rounds_count,
                len(seeds),
                ";".join(str(s) for s in seeds),
                avg_m, avg_s, w_m, w_s, b_m, b_s, v_m, v_s,
                j_m, j_s, g_m, g_s, u_m, u_s,
                ledger["bytes_down"], ledger["bytes_up"],
                ledger["messages_down"] + ledger["messages_up"],
            ]
        )

    _write_csv(os.path.join(out_dir, "comparison.csv"), COMPARISON_COLUMNS, comparison_rows)
    _write_csv(os.path.join(out_dir, "histogram.csv"), HISTOGRAM_COLUMNS, histogram_rows)
    _write_csv(os.path.join(out_dir, "q_trace.csv"), Q_TRACE_COLUMNS, q_trace_rows)

    from . import plots

    fig_dir = os.path.join(out_dir, "figures")
    plots.render_accuracy_histogram(os.path.join(fig_dir, "accuracy_distribution.png"), histogram_data)
    plots.render_q_trace(os.path.join(fig_dir, "q_trace.png"), q_trace_data)

    return {
        "comparison": os.path.join(out_dir, "comparison.csv"),
        "histogram": os.path.join(out_dir, "histogram.csv"),
        "q_trace": os.path.join(out_dir, "q_trace.csv"),
        "figures": fig_dir,
    }


# ---------------------------------------------------------------------------
# Agent training


def _bandit_episode(policy: PolicyNet, q_grid, rng: np.random.Generator) -> Trajectory:
    """Degenerate environment: constant zero state, reward 1 for action 0."""
    state = np.zeros(policy.state_dim)
    _, action_index, log_prob = select_action(policy, q_grid, state, rng, explore=True)
    step = TrajectoryStep(state=state, action_index=action_index, log_prob=log_prob,
                          reward=1.0 if action_index == 0 else 0.0)
    trajectory = Trajectory()
    trajectory.append(step)
    return trajectory


def train_agent(
    cfg: ExperimentConfig,
    out_dir: str,
    bandit: bool = False,
    resume: str | None = None,
    seed_override: list[int] | None = None,
) -> dict:
    """Train the policy across episodes; writes checkpoints and the curve.

    In bandit mode the federated environment is replaced by a constant-state
    two-action problem with deterministic rewards, which exercises the full
    training loop end to end.
    """
    seeds = seed_override if seed_override is not None else cfg.seeds
    base_seed = seeds[0]
    if bandit:
        if len(cfg.agent.q_grid) != 2:
            raise ConfigError("bandit mode needs a q grid with exactly 2 actions")
    else:
        cfg.require_federation()

    os.makedirs(out_dir, exist_ok=True)
    ckpt_dir = os.path.join(out_dir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)

    grid = cfg.agent.q_grid
    if resume is not None:
        policy, grid, baseline, episodes_done = load_checkpoint(resume)
        if grid != cfg.agent.q_grid:
            raise ConfigError("checkpoint q grid does not match the config")
    else:
        if bandit:
            state_dim = cfg.agent.state_dim(cfg.agent.state_clients or 1)
        else:
            m = cfg.participants or max(
                math.ceil(cfg.participation_fraction * cfg.data.num_clients), 1
            )
            state_dim = cfg.agent.state_dim(cfg.agent.state_clients or m)
        policy = PolicyNet(state_dim, cfg.agent.hidden_dim, len(grid),
                           seed=derive_stream_seed(base_seed, "agent", 0))
        baseline = EMABaseline(decay=cfg.agent.baseline_decay)
        episodes_done = 0

    _write_json(
        os.path.join(out_dir, "experiment.json"),
        {
            "schema_version": EXPERIMENT_SCHEMA_VERSION,
            "mode": "train-agent",
            "bandit": bandit,
            "config": cfg.raw,
            "seeds": seeds,
            "resumed_from": resume,
        },
    )

    dynamic = StrategyConfig(kind="dynamic_q", loss_floor=(cfg.strategy or StrategyConfig("dynamic_q")).loss_floor)
    arm = Arm(name="train", strategy=dynamic)

    curve_rows = []
    end_episode = episodes_done + cfg.episodes
    for episode in range(episodes_done, end_episode):
        if bandit:
            rng = np.random.default_rng(
                np.random.SeedSequence((derive_stream_seed(base_seed, "agent", 0), 1 + episode))
            )
            trajectory = _bandit_episode(policy, grid, rng)
        else:
            bundle = seed_bundle(base_seed, episode, cfg.share_data_across_episodes)
            run_cfg = _arm_run_config(cfg, arm, bundle, cfg.parallel)
            summary = run(run_cfg, policy=policy, baseline=baseline)
            trajectory = summary.trajectory
        episode_return = float(trajectory.returns_to_go(cfg.agent.discount)[0])
        policy_update(policy, trajectory, cfg.agent.learning_rate, baseline, cfg.agent.discount)
        curve_rows.append([episode, episode_return, baseline.value])
        done = episode + 1
        if done % cfg.checkpoint_every == 0:
            _save_checkpoint_or_die(
                os.path.join(ckpt_dir, f"checkpoint_{done:06d}.txt"), policy, grid, baseline, done
            )

    final_ckpt = os.path.join(ckpt_dir, "checkpoint_final.txt")
    _save_checkpoint_or_die(final_ckpt, policy, grid, baseline, end_episode)
    _write_csv(os.path.join(out_dir, "learning_curve.csv"), LEARNING_CURVE_COLUMNS, curve_rows)

    from . import plots

    plots.render_learning_curve(
        os.path.join(out_dir, "figures", "learning_curve.png"),
        [(int(e), float(r), float(b)) for e, r, b in curve_rows],
    )
    return {
        "policy": policy,
        "baseline": baseline,
        "q_grid": grid,
        "episodes_completed": end_episode,
        "checkpoint": final_ckpt,
        "curve": curve_rows,
    }


def _save_checkpoint_or_die(path, policy, grid, baseline, episodes_done) -> None:
    try:
        save_checkpoint(path, policy, grid, baseline, episodes_done)
    except OSError as exc:
        raise CheckpointWriteError(f"cannot write checkpoint {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Dataset generation


def gen_data(cfg: ExperimentConfig, out_dir: str, seed_override: list[int] | None = None) -> tuple[str, object]:
    if cfg.data is None:
        raise ConfigError("config is missing the 'data' section")
    data_cfg = cfg.data
    if seed_override:
        data_cfg = SynthConfig(**{**asdict(cfg.data), "seed": seed_override[0]})
    shards, _ = generate(data_cfg)
    manifest_path = export_federation(shards, data_cfg, out_dir)
    return manifest_path, shard_stats(shards)
