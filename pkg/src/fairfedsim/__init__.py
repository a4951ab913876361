"""fairfedsim: a deterministic simulator of fairness-aware federated learning.

Clients hold heterogeneous synthetic data and train a shared model over
communication rounds.  Aggregation weights follow the loss-power rule
w_k = p_k F_k^q / sum p_i F_i^q; the exponent q is 0 (plain FedAvg), a fixed
value, or chosen every round by a REINFORCE-trained policy that reads the
clients' reported losses.
"""

from .aggregation import StrategyConfig, aggregate, fedavg_weights, loss_power_weights
from .agent import (
    AgentConfig,
    EMABaseline,
    PolicyNet,
    Trajectory,
    TrajectoryStep,
    build_state,
    fairness_reward,
    load_checkpoint,
    policy_update,
    save_checkpoint,
    select_action,
    validate_q_grid,
)
from .datasets import ClientShard, SynthConfig, export_federation, generate, load_federation, shard_stats
from .errors import (
    CheckpointWriteError,
    ConfigError,
    DivergedClientError,
    DivergedPolicyError,
)
from .federation import (
    FederatedRun,
    MessageLedger,
    RoundRecord,
    RunConfig,
    RunSummary,
    SeedBundle,
    run,
    select_clients,
)
from .local_training import ClientReport, LocalConfig, client_loss_probe, local_round
from .metrics import (
    FairnessReport,
    accuracy_histogram,
    alpha_utility,
    fairness_report,
    gini_coefficient,
    jain_index,
    per_class_accuracy,
)
from .models import Batch, ModelSpec, accuracy, init_params, loss, loss_grad, predict

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "Batch",
    "CheckpointWriteError",
    "ClientReport",
    "ClientShard",
    "ConfigError",
    "DivergedClientError",
    "DivergedPolicyError",
    "EMABaseline",
    "FairnessReport",
    "FederatedRun",
    "LocalConfig",
    "MessageLedger",
    "ModelSpec",
    "PolicyNet",
    "RoundRecord",
    "RunConfig",
    "RunSummary",
    "SeedBundle",
    "StrategyConfig",
    "SynthConfig",
    "Trajectory",
    "TrajectoryStep",
    "accuracy",
    "accuracy_histogram",
    "aggregate",
    "alpha_utility",
    "build_state",
    "client_loss_probe",
    "export_federation",
    "fairness_report",
    "fairness_reward",
    "fedavg_weights",
    "generate",
    "gini_coefficient",
    "init_params",
    "jain_index",
    "load_checkpoint",
    "load_federation",
    "local_round",
    "loss",
    "loss_grad",
    "loss_power_weights",
    "per_class_accuracy",
    "policy_update",
    "predict",
    "run",
    "save_checkpoint",
    "select_action",
    "select_clients",
    "shard_stats",
    "validate_q_grid",
]
