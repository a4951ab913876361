"""Server-side controller that picks the fairness exponent q each round.

The controller is a small tanh MLP over a fixed-length featurization of the
selected clients' reported losses.  It outputs a categorical distribution
over a discrete grid of q values; one federated training run is one episode,
and the policy is updated once per episode by REINFORCE with reward-to-go
and an exponential-moving-average baseline over episode returns.

The reward for a chosen q is the next round's global validation accuracy
damped by the spread of the next round's client losses:

    r = accuracy * exp(-var(losses))

so the controller is paid for models that are both accurate and evenly fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergedPolicyError
from .models import read_vector_text, write_vector_text

DEFAULT_Q_GRID = (0.0, 0.1, 0.5, 1.0, 2.0, 5.0)
CHECKPOINT_SCHEMA_VERSION = 1
STATE_EXTRA_FEATURES = 4  # mean, std, previous q, round progress


def validate_q_grid(values) -> tuple[float, ...]:
    grid = tuple(float(v) for v in values)
    if not grid:
        raise ConfigError("q grid must not be empty")
    if any(not math.isfinite(v) or v < 0 for v in grid):
        raise ConfigError("q grid values must be finite and >= 0")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("q grid must be strictly increasing")
    if 0.0 not in grid:
        raise ConfigError("q grid must contain 0.0")
    return grid


@dataclass(frozen=True)
class AgentConfig:
    q_grid: tuple[float, ...] = DEFAULT_Q_GRID
    hidden_dim: int = 32
    learning_rate: float = 1e-2
    discount: float = 0.99
    baseline_decay: float = 0.9
    explore: bool = True
    state_clients: int | None = None  # loss-segment width; defaults to participants
    accuracy_in_state: bool = False
    same_step_reward: bool = False

    def validate(self) -> None:
        validate_q_grid(self.q_grid)
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1")
        if not (self.learning_rate > 0) or not math.isfinite(self.learning_rate):
            raise ConfigError("learning_rate must be finite and > 0")
        if not (0.0 <= self.discount <= 1.0):
            raise ConfigError("discount must lie in [0, 1]")
        if not (0.0 <= self.baseline_decay < 1.0):
            raise ConfigError("baseline_decay must lie in [0, 1)")
        if self.state_clients is not None and self.state_clients < 1:
            raise ConfigError("state_clients must be >= 1")

    def state_dim(self, max_tracked: int) -> int:
        return max_tracked + STATE_EXTRA_FEATURES + (1 if self.accuracy_in_state else 0)


def build_state(
    losses,
    prev_q: float,
    round_index: int,
    total_rounds: int,
    max_tracked: int,
    global_accuracy: float | None = None,
) -> np.ndarray:
    """Fixed-length featurization of a round's reported losses.

    Layout: the ``max_tracked`` largest losses sorted descending (zero
    padded when fewer clients reported), then mean loss, population std of
    losses, the previous round's q, and round progress t/T.  When
    ``global_accuracy`` is given it is appended as one extra feature.
    Sorting makes the state invariant to report order.
    """
    arr = np.asarray(losses, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("build_state needs at least one loss")
    ordered = np.sort(arr)[::-1]
    segment = np.zeros(max_tracked, dtype=np.float64)
    keep = min(max_tracked, ordered.size)
    segment[:keep] = ordered[:keep]
    # stats over the sorted array so permuted reports give a bit-identical state
    tail = [ordered.mean(), ordered.std(), prev_q, round_index / total_rounds]
    if global_accuracy is not None:
        tail.append(global_accuracy)
    return np.concatenate([segment, np.array(tail, dtype=np.float64)])


class PolicyNet:
    """Two-hidden-layer tanh network mapping a state to action logits.

    The output layer starts at zero so the untrained policy is exactly
    uniform over the q grid.
    """

    def __init__(self, state_dim: int, hidden_dim: int, num_actions: int, seed: int = 0):
        if state_dim < 1 or hidden_dim < 1 or num_actions < 1:
            raise ConfigError("state_dim, hidden_dim and num_actions must be >= 1")
        rng = np.random.default_rng(np.random.SeedSequence((seed, 0xA6E)))
        self.state_dim = state_dim
        self.hidden_dim = hidden_dim
        self.num_actions = num_actions
        self.w1 = rng.standard_normal((state_dim, hidden_dim)) / math.sqrt(state_dim)
        self.b1 = np.zeros(hidden_dim)
        self.w2 = rng.standard_normal((hidden_dim, hidden_dim)) / math.sqrt(hidden_dim)
        self.b2 = np.zeros(hidden_dim)
        self.w3 = np.zeros((hidden_dim, num_actions))
        self.b3 = np.zeros(num_actions)

    # -- forward -----------------------------------------------------------

    def _hidden(self, state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h1 = np.tanh(state @ self.w1 + self.b1)
        h2 = np.tanh(h1 @ self.w2 + self.b2)
        return h1, h2

    def logits(self, state: np.ndarray) -> np.ndarray:
        _, h2 = self._hidden(np.asarray(state, dtype=np.float64))
        return h2 @ self.w3 + self.b3

    def action_log_probs(self, state: np.ndarray) -> np.ndarray:
        z = self.logits(state)
        if not np.all(np.isfinite(z)):
            raise DivergedPolicyError("policy produced non-finite logits")
        shifted = z - z.max()
        return shifted - math.log(np.exp(shifted).sum())

    def action_probs(self, state: np.ndarray) -> np.ndarray:
        return np.exp(self.action_log_probs(state))

    # -- gradients ---------------------------------------------------------

    def log_prob_grad(self, state: np.ndarray, action_index: int) -> tuple[float, np.ndarray]:
        """log pi(action|state) and its gradient w.r.t. the flat parameters."""
        state = np.asarray(state, dtype=np.float64)
        h1, h2 = self._hidden(state)
        z = h2 @ self.w3 + self.b3
        shifted = z - z.max()
        logp = shifted - math.log(np.exp(shifted).sum())
        probs = np.exp(logp)

        dz = -probs
        dz[action_index] += 1.0
        gw3 = np.outer(h2, dz)
        gb3 = dz
        dh2 = (self.w3 @ dz) * (1.0 - h2 * h2)
        gw2 = np.outer(h1, dh2)
        gb2 = dh2
        dh1 = (self.w2 @ dh2) * (1.0 - h1 * h1)
        gw1 = np.outer(state, dh1)
        gb1 = dh1
        grad = np.concatenate(
            [gw1.ravel(), gb1, gw2.ravel(), gb2, gw3.ravel(), gb3]
        )
        return float(logp[action_index]), grad

    # -- flat parameter view -------------------------------------------------

    @property
    def num_params(self) -> int:
        return self.to_vector().size

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.w1.ravel(), self.b1, self.w2.ravel(), self.b2, self.w3.ravel(), self.b3]
        )

    def load_vector(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        shapes = [
            ("w1", (self.state_dim, self.hidden_dim)),
            ("b1", (self.hidden_dim,)),
            ("w2", (self.hidden_dim, self.hidden_dim)),
            ("b2", (self.hidden_dim,)),
            ("w3", (self.hidden_dim, self.num_actions)),
            ("b3", (self.num_actions,)),
        ]
        expected = sum(int(np.prod(s)) for _, s in shapes)
        if vec.shape != (expected,):
            raise ValueError(f"parameter vector has length {vec.shape}, expected ({expected},)")
        i = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            setattr(self, name, vec[i : i + size].reshape(shape).copy())
            i += size


def select_action(
    net: PolicyNet,
    q_grid,
    state: np.ndarray,
    rng: np.random.Generator,
    explore: bool = True,
) -> tuple[float, int, float]:
    """Pick a q from the grid; returns (q, action_index, log_prob).

    With ``explore`` the action is sampled from the categorical softmax of
    the logits (deterministic given the rng state); otherwise it is the
    argmax with lowest-index tie-break.
    """
    logp = net.action_log_probs(state)
    if explore:
        idx = int(rng.choice(len(logp), p=np.exp(logp)))
    else:
        idx = int(np.argmax(logp))
    return float(q_grid[idx]), idx, float(logp[idx])


def fairness_reward(global_accuracy: float, losses) -> float:
    """accuracy * exp(-population variance of the losses), in [0, accuracy]."""
    if not (0.0 <= global_accuracy <= 1.0):
        raise ValueError("global_accuracy must lie in [0, 1]")
    arr = np.asarray(losses, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("fairness_reward needs at least one loss")
    return float(global_accuracy * math.exp(-float(np.var(arr))))


@dataclass
class EMABaseline:
    """Exponential moving average of episode returns."""

    decay: float = 0.9
    value: float = 0.0
    count: int = 0

    def update(self, episode_return: float) -> None:
        if self.count == 0:
            self.value = episode_return
        else:
            self.value = self.decay * self.value + (1.0 - self.decay) * episode_return
        self.count += 1


@dataclass
class TrajectoryStep:
    state: np.ndarray
    action_index: int
    log_prob: float
    reward: float | None = None


@dataclass
class Trajectory:
    steps: list[TrajectoryStep] = field(default_factory=list)

    def append(self, step: TrajectoryStep) -> None:
        self.steps.append(step)

    def __len__(self) -> int:
        return len(self.steps)

    def returns_to_go(self, discount: float) -> np.ndarray:
        rewards = []
        for i, step in enumerate(self.steps):
            if step.reward is None:
                raise ValueError(f"trajectory step {i} has no reward")
            rewards.append(step.reward)
        out = np.zeros(len(rewards))
        acc = 0.0
        for i in range(len(rewards) - 1, -1, -1):
            acc = rewards[i] + discount * acc
            out[i] = acc
        return out


def policy_update(
    net: PolicyNet,
    trajectory: Trajectory,
    learning_rate: float,
    baseline: EMABaseline,
    discount: float = 0.99,
) -> PolicyNet:
    """One REINFORCE ascent step from a finished episode.

    theta += lr * sum_t (G_t - b) * grad log pi(a_t | s_t), with G_t the
    discounted reward-to-go and b the baseline value BEFORE this episode is
    folded into it.  The baseline is then updated with the episode return.
    """
    if len(trajectory) == 0:
        raise ValueError("policy_update needs a non-empty trajectory")
    gains = trajectory.returns_to_go(discount)
    if not np.all(np.isfinite(gains)):
        raise DivergedPolicyError("non-finite episode returns")
    total = np.zeros(net.num_params)
    for step, gain in zip(trajectory.steps, gains):
        advantage = gain - baseline.value
        if advantage == 0.0:
            continue
        _, grad = net.log_prob_grad(step.state, step.action_index)
        total += advantage * grad
    if not np.all(np.isfinite(total)):
        raise DivergedPolicyError("non-finite policy gradient")
    net.load_vector(net.to_vector() + learning_rate * total)
    baseline.update(float(gains[0]))
    return net


# ---------------------------------------------------------------------------
# Checkpointing: a single flat numeric text file (same format as parameter
# vector exports).  Layout, one value per line:
#   schema_version, state_dim, hidden_dim, num_actions,
#   the num_actions grid values,
#   param_count, the param_count network parameters,
#   baseline decay, baseline value, baseline count, episodes_completed.

def save_checkpoint(
    path, net: PolicyNet, q_grid, baseline: EMABaseline, episodes_completed: int
) -> None:
    params = net.to_vector()
    values = np.concatenate(
        [
            [CHECKPOINT_SCHEMA_VERSION, net.state_dim, net.hidden_dim, net.num_actions],
            np.asarray(q_grid, dtype=np.float64),
            [params.size],
            params,
            [baseline.decay, baseline.value, baseline.count, episodes_completed],
        ]
    )
    write_vector_text(path, values)


def load_checkpoint(path) -> tuple[PolicyNet, tuple[float, ...], EMABaseline, int]:
    values = read_vector_text(path)
    if values.size < 5 or int(values[0]) != CHECKPOINT_SCHEMA_VERSION:
        raise ConfigError(f"{path}: not a schema-version-{CHECKPOINT_SCHEMA_VERSION} checkpoint")
    state_dim, hidden_dim, num_actions = (int(v) for v in values[1:4])
    i = 4
    grid = validate_q_grid(values[i : i + num_actions])
    i += num_actions
    n_params = int(values[i])
    i += 1
    if values.size != i + n_params + 4:
        raise ConfigError(f"{path}: checkpoint length does not match its header")
    net = PolicyNet(state_dim, hidden_dim, num_actions)
    net.load_vector(values[i : i + n_params])
    i += n_params
    baseline = EMABaseline(decay=float(values[i]), value=float(values[i + 1]), count=int(values[i + 2]))
    episodes_completed = int(values[i + 3])
    return net, grid, baseline, episodes_completed
