"""Small differentiable classifiers over flat parameter vectors.

Two architectures are supported: softmax regression and tanh MLPs. Parameters
are a single float64 vector laid out layer by layer as ``W`` (fan_in x fan_out,
row-major) followed by ``b``. Softmax-regression training runs through the
compiled kernels when available (see :mod:`fairfl._backend`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fairfl import _backend

ARCHITECTURES = ("softmax_regression", "mlp")


@dataclass(frozen=True)
class ModelSpec:
    architecture: str = "softmax_regression"
    input_dim: int = 32
    num_classes: int = 10
    hidden_sizes: tuple[int, ...] = ()

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.input_dim < 1 or self.num_classes < 1:
            raise ValueError("input_dim and num_classes must be positive")
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.architecture == "softmax_regression" and self.hidden_sizes:
            raise ValueError("softmax_regression takes no hidden_sizes")
        if self.architecture == "mlp" and not self.hidden_sizes:
            raise ValueError("mlp needs at least one hidden layer")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden sizes must be positive")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim, *self.hidden_sizes, self.num_classes]


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 0.1
    local_epochs: int = 1
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("local_epochs and batch_size must be positive")


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    """A parameter delta and the datapoint count the client reports with it."""

    delta: np.ndarray
    reported_count: int

    def __post_init__(self):
        if self.reported_count < 1:
            raise ValueError("reported_count must be >= 1")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.delta))


@dataclass(frozen=True)
class Evaluation:
    per_class: np.ndarray  # percent; NaN where the class has no test rows
    overall: float
    counts: np.ndarray = field(repr=False)


def parameter_count(spec: ModelSpec) -> int:
    sizes = spec.layer_sizes
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def unpack(params: np.ndarray, spec: ModelSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of ``params`` as ``[(W, b), ...]``; writing to them writes through."""
    if params.ndim != 1 or params.shape[0] != parameter_count(spec):
        raise ValueError(f"expected {parameter_count(spec)} parameters, got shape {params.shape}")
    layers = []
    off = 0
    sizes = spec.layer_sizes
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = params[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params[off:off + fan_out]
        off += fan_out
        layers.append((W, b))
    return layers


def init_parameters(spec: ModelSpec, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    params = np.zeros(parameter_count(spec))
    for W, _ in unpack(params, spec):
        bound = 1.0 / np.sqrt(W.shape[0])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return params


def _check_features(features, spec):
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"features must have shape (n, {spec.input_dim}), got {X.shape}")
    return X


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _activations(params, spec, X):
    layers = unpack(params, spec)
    acts = [X]
    h = X
    for W, b in layers[:-1]:
        h = np.tanh(h @ W + b)
        acts.append(h)
    W, b = layers[-1]
    return acts, h @ W + b


def forward(params: np.ndarray, spec: ModelSpec, features) -> np.ndarray:
    X = _check_features(features, spec)
    _, logits = _activations(params, spec, X)
    return _softmax(logits)


def predict(params: np.ndarray, spec: ModelSpec, features) -> np.ndarray:
    X = _check_features(features, spec)
    _, logits = _activations(params, spec, X)
    return logits.argmax(axis=1)


def loss(params: np.ndarray, spec: ModelSpec, features, labels) -> float:
    """Mean cross-entropy."""
    X = _check_features(features, spec)
    y = np.asarray(labels, dtype=np.int64)
    _, logits = _activations(params, spec, X)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def _mlp_gradient(params, spec, X, y):
    acts, logits = _activations(params, spec, X)
    delta = _softmax(logits)
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    grad = np.empty_like(params)
    grads = unpack(grad, spec)
    layers = unpack(params, spec)
    for li in range(len(layers) - 1, -1, -1):
        gW, gb = grads[li]
        gW[...] = acts[li].T @ delta
        gb[...] = delta.sum(axis=0)
        if li > 0:
            delta = (delta @ layers[li][0].T) * (1.0 - acts[li] ** 2)
    return grad


def gradient(params: np.ndarray, spec: ModelSpec, features, labels, backend: str | None = None) -> np.ndarray:
    """Gradient of the mean cross-entropy over the batch."""
    X = np.ascontiguousarray(_check_features(features, spec))
    y = np.ascontiguousarray(labels, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("gradient of an empty batch")
    if len(y) != X.shape[0]:
        raise ValueError(f"{X.shape[0]} feature rows but {len(y)} labels")
    params = np.ascontiguousarray(params, dtype=np.float64)
    if params.shape != (parameter_count(spec),):
        raise ValueError(f"expected {parameter_count(spec)} parameters, got shape {params.shape}")
    if spec.architecture == "softmax_regression":
        k = _backend.get_kernels(backend)
        return k.softmax_regression_grad(params, X, y, spec.input_dim, spec.num_classes)
    return _mlp_gradient(params, spec, X, y)


def local_train(params: np.ndarray, spec: ModelSpec, dataset, cfg: TrainingConfig,
                backend: str | None = None) -> ClientUpdate:
    """Minibatch SGD from ``params``; returns the parameter delta and dataset size.

    Each epoch draws a fresh permutation from an RNG seeded with ``cfg.seed``;
    the last batch of an epoch may be partial.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    X = np.ascontiguousarray(_check_features(dataset.features, spec))
    y = np.ascontiguousarray(dataset.labels, dtype=np.int64)
    start = np.array(params, dtype=np.float64, copy=True)
    if start.shape != (parameter_count(spec),):
        raise ValueError(f"expected {parameter_count(spec)} parameters, got shape {start.shape}")
    w = start.copy()
    rng = np.random.default_rng(cfg.seed)
    k = _backend.get_kernels(backend)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n).astype(np.int64)
        if spec.architecture == "softmax_regression":
            k.softmax_regression_sgd_epoch(w, X, y, order, float(cfg.learning_rate), cfg.batch_size,
                                           spec.input_dim, spec.num_classes)
        else:
            for s in range(0, n, cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                w -= cfg.learning_rate * _mlp_gradient(w, spec, X[idx], y[idx])
    delta = w - start
    if not np.all(np.isfinite(delta)):
        raise FloatingPointError("local training diverged (non-finite parameters)")
    return ClientUpdate(delta=delta, reported_count=n)


def evaluate(params: np.ndarray, spec: ModelSpec, dataset) -> Evaluation:
    """Per-class and overall accuracy in percent.

    Classes with no rows in ``dataset`` get NaN and are left out of any mean.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    y = np.asarray(dataset.labels, dtype=np.int64)
    correct = predict(params, spec, dataset.features) == y
    counts = np.bincount(y, minlength=spec.num_classes).astype(np.int64)
    hits = np.bincount(y, weights=correct, minlength=spec.num_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, 100.0 * hits / counts, np.nan)
    overall = 100.0 * correct.sum() / len(y)
    return Evaluation(per_class=per_class, overall=float(overall), counts=counts)
