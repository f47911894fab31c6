"""Multinomial logistic regression trained by minibatch SGD, plus the
federated client-round procedures, convergence test and model evaluation.

Weight matrices are C x (F+1) float64 arrays whose last column is the
bias.  The training objective is L2-regularized multinomial cross-entropy;
all operations are pure given their random stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dp import DpSpec, NoiseRecord, SensitivityParams, perturb_weights
from .exact import exact_mean, to_exact, to_float


@dataclass
class Dataset:
    """Feature matrix (N x F) and integer labels (N,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.labels.ndim != 1:
            raise ValueError("labels must be a 1-D vector")
        if len(self.features) != len(self.labels):
            raise ValueError(
                f"row count mismatch: {len(self.features)} features rows "
                f"vs {len(self.labels)} labels"
            )
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError("labels must be integers")
        if len(self.labels) and self.labels.min() < 0:
            raise ValueError("labels must be nonnegative")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TrainConfig:
    """Local SGD settings: step count, learning rate, L2 strength, batch size."""

    local_steps: int
    learning_rate: float
    l2_alpha: float
    batch_size: int

    def __post_init__(self) -> None:
        if self.local_steps < 1:
            raise ValueError(f"local_steps must be >= 1, got {self.local_steps}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not self.l2_alpha > 0:
            raise ValueError(f"l2_alpha must be positive, got {self.l2_alpha}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EvalReport:
    """Per-iteration accuracy of a client's local model vs the federated one."""

    iteration: int
    local_accuracy: float
    federated_accuracy: float

    def __post_init__(self) -> None:
        for name in ("local_accuracy", "federated_accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


def zero_weights(n_classes: int, n_features: int) -> np.ndarray:
    """The all-zeros C x (F+1) initial weight matrix."""
    return np.zeros((n_classes, n_features + 1), dtype=np.float64)


def _augment(features: np.ndarray) -> np.ndarray:
    ones = np.ones((features.shape[0], 1), dtype=np.float64)
    return np.hstack([features, ones])


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def _check_shapes(data: Dataset, w: np.ndarray) -> None:
    if w.ndim != 2:
        raise ValueError("weight matrix must be 2-D")
    if data.features.shape[1] != w.shape[1] - 1:
        raise ValueError(
            f"feature count {data.features.shape[1]} incompatible with "
            f"weight shape {w.shape} (expected {w.shape[1] - 1} features)"
        )
    if len(data) and data.labels.max() >= w.shape[0]:
        raise ValueError(
            f"label {int(data.labels.max())} out of range for {w.shape[0]} classes"
        )


def loss(w: np.ndarray, data: Dataset, l2_alpha: float) -> float:
    """Mean cross-entropy plus (alpha/2) * ||w||^2, the training objective."""
    _check_shapes(data, w)
    x = _augment(data.features)
    probs = _softmax(x @ w.T)
    picked = probs[np.arange(len(data)), data.labels]
    ce = -float(np.mean(np.log(np.maximum(picked, 1e-300))))
    return ce + 0.5 * l2_alpha * float(np.sum(w * w))


def gradient(w: np.ndarray, data: Dataset, l2_alpha: float) -> np.ndarray:
    """Analytic gradient of ``loss`` with respect to the weight matrix."""
    _check_shapes(data, w)
    x = _augment(data.features)
    probs = _softmax(x @ w.T)
    onehot = np.zeros_like(probs)
    onehot[np.arange(len(data)), data.labels] = 1.0
    return (probs - onehot).T @ x / len(data) + l2_alpha * w


def sgd_train(
    data: Dataset,
    init: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run exactly ``cfg.local_steps`` minibatch gradient steps from ``init``.

    Minibatches cycle through a seeded permutation of the data, reshuffling
    after each full pass.  ``init`` is not modified.
    """
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    init = np.asarray(init, dtype=np.float64)
    _check_shapes(data, init)
    w = init.copy()
    n = len(data)
    order = rng.permutation(n)
    cursor = 0
    for _ in range(cfg.local_steps):
        if cursor >= n:
            order = rng.permutation(n)
            cursor = 0
        batch_idx = order[cursor : cursor + cfg.batch_size]
        cursor += cfg.batch_size
        batch = Dataset(data.features[batch_idx], data.labels[batch_idx])
        w -= cfg.learning_rate * gradient(w, batch, cfg.l2_alpha)
    return w


def federated_average(models: list[np.ndarray]) -> np.ndarray:
    """Elementwise arithmetic mean of weight matrices (correctly rounded)."""
    return to_float(exact_mean(models))


def converged(local: np.ndarray, federated: np.ndarray, tolerance: float) -> bool:
    """True iff every federated weight is within ``tolerance`` of the local one."""
    local = np.asarray(local, dtype=np.float64)
    federated = np.asarray(federated, dtype=np.float64)
    if local.shape != federated.shape:
        raise ValueError(f"shape mismatch: {local.shape} vs {federated.shape}")
    if not (tolerance > 0 and math.isfinite(tolerance)):
        raise ValueError(f"tolerance must be positive and finite, got {tolerance}")
    return bool(np.max(np.abs(local - federated)) <= tolerance)


def subtract_own_noise(
    federated: np.ndarray, record: NoiseRecord, active_count: int
) -> np.ndarray:
    """Remove an agent's own noise share from an averaged model.

    Returns ``federated - record.values / active_count`` over exact
    rationals, so a single client recovers its clean weights bit for bit.
    """
    if active_count < 1:
        raise ValueError(f"active_count must be >= 1, got {active_count}")
    federated = np.asarray(federated)
    if federated.shape != record.values.shape:
        raise ValueError(
            f"shape mismatch: federated {federated.shape} vs "
            f"noise record {record.values.shape}"
        )
    return to_exact(federated) - to_exact(record.values) / active_count


def evaluate(w: np.ndarray, test: Dataset) -> float:
    """Fraction of test rows whose argmax class score matches the label.

    Ties break toward the lowest class index.
    """
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    w = to_float(np.asarray(w))
    _check_shapes(test, w)
    scores = _augment(test.features) @ w.T
    predictions = np.argmax(scores, axis=1)
    return float(np.mean(predictions == test.labels))


def _zero_record(w: np.ndarray, iteration: int, owner: str) -> NoiseRecord:
    return NoiseRecord(np.zeros_like(np.asarray(w, dtype=np.float64)), iteration, owner)


def client_round_incremental(
    server_w: np.ndarray,
    fresh_data: Dataset,
    cfg: TrainConfig,
    dp: DpSpec | None,
    sens: SensitivityParams | None,
    rng: np.random.Generator,
    noise_rng: np.random.Generator | None = None,
    iteration: int = 0,
    owner: str = "",
) -> tuple[np.ndarray, NoiseRecord]:
    """One client round of the fresh-data algorithm.

    Trains from the current federated weights on this iteration's new data
    only, then perturbs the result per ``dp`` (no-op when ``dp`` is None,
    in which case the plain trained weights are returned).
    """
    trained = sgd_train(fresh_data, server_w, cfg, rng)
    if dp is None:
        return trained, _zero_record(trained, iteration, owner)
    if sens is None:
        raise ValueError("sensitivity parameters are required when dp is enabled")
    return perturb_weights(
        trained, dp, sens, noise_rng if noise_rng is not None else rng, iteration, owner
    )


def client_round_retrain(
    server_w: np.ndarray,
    cumulative_data: Dataset,
    cached: tuple[np.ndarray, NoiseRecord] | None,
    tolerance: float,
    cfg: TrainConfig,
    dp: DpSpec | None,
    sens: SensitivityParams | None,
    rng: np.random.Generator,
    noise_rng: np.random.Generator | None = None,
    iteration: int = 0,
    owner: str = "",
) -> tuple[np.ndarray, NoiseRecord, bool]:
    """One client round of the cumulative-retrain algorithm.

    Retrains from scratch (zero init, ignoring ``server_w``) on the entire
    local dataset unless the federated weights already sit within
    ``tolerance`` of the cached noisy weights, in which case the cached
    pair is returned unchanged.
    """
    server_w = np.asarray(server_w, dtype=np.float64)
    if cached is not None:
        cached_w = to_float(cached[0])
        if cached_w.shape != server_w.shape:
            raise ValueError(
                f"shape mismatch: cached {cached_w.shape} vs server {server_w.shape}"
            )
        if np.max(np.abs(server_w - cached_w)) <= tolerance:
            return cached[0], cached[1], False
    trained = sgd_train(cumulative_data, np.zeros_like(server_w), cfg, rng)
    if dp is None:
        return trained, _zero_record(trained, iteration, owner), True
    if sens is None:
        raise ValueError("sensitivity parameters are required when dp is enabled")
    perturbed, record = perturb_weights(
        trained, dp, sens, noise_rng if noise_rng is not None else rng, iteration, owner
    )
    return perturbed, record, True
