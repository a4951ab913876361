"""From-scratch differentiable classifiers used by the simulated clients.

Two model kinds are supported: multinomial logistic regression and a
one-hidden-layer tanh MLP.  All trainable parameters live in a single flat
float64 vector so that server-side aggregation is plain vector arithmetic.
The flat layout is fixed by the :class:`ModelSpec`:

* ``logistic``: ``[W (d*C), b (C)]``
* ``mlp``:      ``[W1 (d*h), b1 (h), W2 (h*C), b2 (C)]``

Everything here is a pure function of its arguments; nothing is mutated and
no global state is read, so all operations are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MODEL_KINDS = ("logistic", "mlp")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor mapping flat parameter indices to layers."""

    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int | None = None
    weight_init_scale: float = 0.1

    def validate(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        if self.input_dim < 1:
            raise ConfigError("input_dim must be >= 1")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.kind == "mlp" and (self.hidden_dim is None or self.hidden_dim < 1):
            raise ConfigError("mlp requires hidden_dim >= 1")
        if not np.isfinite(self.weight_init_scale) or self.weight_init_scale < 0:
            raise ConfigError("weight_init_scale must be finite and >= 0")

    @property
    def param_count(self) -> int:
        d, c = self.input_dim, self.num_classes
        if self.kind == "logistic":
            return d * c + c
        h = self.hidden_dim or 0
        return d * h + h + h * c + c


@dataclass
class Batch:
    """A set of labelled samples: features (n, d) and integer class labels (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be 2-D and labels 1-D")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on sample count")
        if self.features.shape[0] < 1:
            raise ValueError("batch must contain at least one sample")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("batch features contain non-finite entries")
        if np.any(self.labels < 0):
            raise ValueError("labels must be non-negative class indices")

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    def take(self, indices: np.ndarray) -> "Batch":
        return Batch(self.features[indices], self.labels[indices])


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Draw initial parameters: zero-mean Gaussian weights scaled by
    ``spec.weight_init_scale``, biases exactly zero.  Deterministic in
    (spec, seed)."""
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    d, c = spec.input_dim, spec.num_classes
    s = spec.weight_init_scale
    if spec.kind == "logistic":
        w = s * rng.standard_normal((d, c))
        return np.concatenate([w.ravel(), np.zeros(c)])
    h = spec.hidden_dim
    w1 = s * rng.standard_normal((d, h))
    w2 = s * rng.standard_normal((h, c))
    return np.concatenate([w1.ravel(), np.zeros(h), w2.ravel(), np.zeros(c)])


def _check_params(spec: ModelSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != spec.param_count:
        raise ValueError(
            f"parameter vector has length {params.shape}, expected ({spec.param_count},)"
        )
    return params


def _unpack_logistic(spec: ModelSpec, params: np.ndarray):
    d, c = spec.input_dim, spec.num_classes
    w = params[: d * c].reshape(d, c)
    b = params[d * c : d * c + c]
    return w, b


def _unpack_mlp(spec: ModelSpec, params: np.ndarray):
    d, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    i = 0
    w1 = params[i : i + d * h].reshape(d, h)
    i += d * h
    b1 = params[i : i + h]
    i += h
    w2 = params[i : i + h * c].reshape(h, c)
    i += h * c
    b2 = params[i : i + c]
    return w1, b1, w2, b2


def _check_batch(spec: ModelSpec, batch: Batch) -> None:
    if batch.features.shape[1] != spec.input_dim:
        raise ValueError(
            f"batch feature dim {batch.features.shape[1]} != model input_dim {spec.input_dim}"
        )
    if np.any(batch.labels >= spec.num_classes):
        raise ValueError("batch contains a label >= num_classes")


def _logits(spec: ModelSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    if spec.kind == "logistic":
        w, b = _unpack_logistic(spec, params)
        return x @ w + b
    w1, b1, w2, b2 = _unpack_mlp(spec, params)
    hidden = np.tanh(x @ w1 + b1)
    return hidden @ w2 + b2


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    # log-sum-exp shift keeps exp() bounded; losses are later raised to a
    # power q, so overflow has to be prevented here at the source.
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(spec: ModelSpec, params: np.ndarray, batch: Batch) -> float:
    """Mean cross-entropy of the batch under a stable log-softmax."""
    params = _check_params(spec, params)
    _check_batch(spec, batch)
    logp = _log_softmax(_logits(spec, params, batch.features))
    n = batch.num_samples
    return float(-logp[np.arange(n), batch.labels].mean())


def loss_grad(spec: ModelSpec, params: np.ndarray, batch: Batch) -> tuple[float, np.ndarray]:
    """Return (loss, analytic gradient of the mean cross-entropy).

    The gradient has the same flat layout as ``params``.
    """
    params = _check_params(spec, params)
    _check_batch(spec, batch)
    x, y = batch.features, batch.labels
    n = batch.num_samples

    if spec.kind == "logistic":
        logits = _logits(spec, params, x)
        logp = _log_softmax(logits)
        value = float(-logp[np.arange(n), y].mean())
        dlogits = np.exp(logp)
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        gw = x.T @ dlogits
        gb = dlogits.sum(axis=0)
        return value, np.concatenate([gw.ravel(), gb])

    w1, b1, w2, b2 = _unpack_mlp(spec, params)
    hidden = np.tanh(x @ w1 + b1)
    logits = hidden @ w2 + b2
    logp = _log_softmax(logits)
    value = float(-logp[np.arange(n), y].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    gw2 = hidden.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhidden = (dlogits @ w2.T) * (1.0 - hidden * hidden)
    gw1 = x.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return value, np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def predict(spec: ModelSpec, params: np.ndarray, batch: Batch) -> np.ndarray:
    """Argmax class predictions; ties break toward the lowest class index
    (np.argmax picks the first maximum)."""
    params = _check_params(spec, params)
    _check_batch(spec, batch)
    return np.argmax(_logits(spec, params, batch.features), axis=1)


def accuracy(spec: ModelSpec, params: np.ndarray, batch: Batch) -> float:
    """Fraction of argmax-correct predictions."""
    return float(np.mean(predict(spec, params, batch) == batch.labels))


# Flat numeric text format shared by parameter-vector exports and policy
# checkpoints: one value per line, '%.17g' (exact float64 round-trip).

def write_vector_text(path, values) -> None:
    values = np.asarray(values, dtype=np.float64).ravel()
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for v in values:
            f.write("%.17g\n" % v)


def read_vector_text(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        return np.array([float(line) for line in f if line.strip()], dtype=np.float64)
