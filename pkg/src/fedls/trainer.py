"""Synthetic federated trainer: softmax regression with inverse-probability-weighted local SGD.

Used to check, on a real optimisation trajectory, the directional claims the
surrogate makes about partial participation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import SimConfig


@dataclass
class ClientDataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (m, d) with one label per row")

    def __len__(self):
        return self.X.shape[0]


def make_federated_data(n_clients: int = 20, n_samples: int = 200, n_features: int = 10,
                        n_classes: int = 4, classes_per_client: int = 2, separation: float = 1.0,
                        seed: int = 0) -> list[ClientDataset]:
    """Gaussian-mixture data split so each client only sees ``classes_per_client`` labels."""
    if not 1 <= classes_per_client <= 2:
        raise ValueError("classes_per_client must be 1 or 2")
    rng = np.random.default_rng(seed)
    means = rng.normal(0.0, separation, size=(n_classes, n_features))
    out = []
    for n in range(n_clients):
        own = [(n + k) % n_classes for k in range(classes_per_client)]
        y = rng.choice(own, size=n_samples)
        X = means[y] + rng.normal(size=(n_samples, n_features))
        out.append(ClientDataset(X, y))
    return out


def n_params(n_features: int, n_classes: int) -> int:
    return n_classes * (n_features + 1)


def _unpack(theta: np.ndarray, n_features: int, n_classes: int):
    k = n_classes * n_features
    return theta[:k].reshape(n_classes, n_features), theta[k:]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(theta: np.ndarray, X: np.ndarray, y: np.ndarray, n_classes: int):
    """Mean cross-entropy over (X, y) and its gradient with respect to the flat parameters."""
    m, d = X.shape
    W, b = _unpack(theta, d, n_classes)
    logits = X @ W.T + b
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(log_norm - z[np.arange(m), y]))
    p = np.exp(z - log_norm[:, None])
    p[np.arange(m), y] -= 1.0
    p /= m
    return loss, np.concatenate([(p.T @ X).ravel(), p.sum(axis=0)])


def local_sgd(x_start: np.ndarray, data: ClientDataset, q: float, cfg: SimConfig,
              rng: np.random.Generator, n_classes: int) -> np.ndarray:
    """``cfg.local_iters`` mini-batch steps with step size learning_rate / q."""
    if not 0 < q <= 1:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    if len(data) < cfg.batch_size:
        raise ValueError(f"client has {len(data)} samples, fewer than batch_size={cfg.batch_size}")
    x = np.array(x_start, dtype=float, copy=True)
    step = cfg.learning_rate / q
    for _ in range(cfg.local_iters):
        idx = rng.choice(len(data), size=cfg.batch_size, replace=False)
        _, g = loss_and_grad(x, data.X[idx], data.y[idx], n_classes)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient in local SGD")
        x -= step * g
    return x


def aggregate(x_global: np.ndarray, participant_updates: Sequence[tuple]) -> np.ndarray:
    """Server step: x + (1/N) * sum of displacements of participating clients.

    ``participant_updates`` holds one ``(x_local, participated)`` pair per
    client, N in total; entries with a false flag are ignored.
    """
    n = len(participant_updates)
    if n == 0:
        return np.array(x_global, copy=True)
    disp = np.zeros((n, x_global.shape[0]))
    for i, (x_local, flag) in enumerate(participant_updates):
        if flag:
            if x_local.shape != x_global.shape:
                raise ValueError(f"update {i} has shape {x_local.shape}, expected {x_global.shape}")
            disp[i] = x_local - x_global
    return x_global + np.sum(disp, axis=0) / n


def global_gradient(x: np.ndarray, datasets: Sequence[ClientDataset], n_classes: int):
    """(f(x), grad f(x)) with f the unweighted mean of client losses."""
    losses, grads = zip(*(loss_and_grad(x, d.X, d.y, n_classes) for d in datasets))
    return float(np.mean(losses)), np.mean(grads, axis=0)


def measure_grad_norm(x: np.ndarray, datasets: Sequence[ClientDataset], n_classes: int) -> float:
    """Squared norm of the full global gradient."""
    return float(np.sum(global_gradient(x, datasets, n_classes)[1] ** 2))


@dataclass
class TrainingHistory:
    grad_norm_sq: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    participants: list = field(default_factory=list)
    params: np.ndarray | None = None

    def mean_grad_norm_sq(self) -> float:
        return float(np.mean(self.grad_norm_sq))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("slot", "grad_norm_sq", "loss", "participants"))
            for t, row in enumerate(zip(self.grad_norm_sq, self.loss, self.participants)):
                w.writerow((t, repr(row[0]), repr(row[1]), row[2]))


def _q_schedule(q, n_rounds: int, n_clients: int) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        q = np.full((n_rounds, n_clients), float(q))
    elif q.ndim == 1:
        q = np.broadcast_to(q, (n_rounds, n_clients))
    if q.shape != (n_rounds, n_clients) or np.any(q <= 0) or np.any(q > 1):
        raise ValueError("q must be scalar, per-client or (rounds, clients) with entries in (0, 1]")
    return q


def _streams(seed: int, n_clients: int):
    root = np.random.SeedSequence(seed)
    init, part, *batch = root.spawn(n_clients + 2)
    return (np.random.default_rng(init), np.random.default_rng(part),
            [np.random.default_rng(s) for s in batch])


def train_federated(datasets: Sequence[ClientDataset], q, cfg: SimConfig, n_rounds: int,
                    n_classes: int, seed: int = 0, x0: np.ndarray | None = None) -> TrainingHistory:
    """Run ``n_rounds`` slots of partial-participation federated SGD.

    Records the global gradient norm and loss at the start of every slot.
    Mini-batch streams are per client and independent of the participation
    stream, so runs with different q on one seed share their batch draws.
    """
    N = len(datasets)
    d = datasets[0].X.shape[1]
    q = _q_schedule(q, n_rounds, N)
    init_rng, part_rng, batch_rngs = _streams(seed, N)
    x = init_rng.normal(0.0, 0.01, n_params(d, n_classes)) if x0 is None else np.array(x0, dtype=float)
    hist = TrainingHistory()
    for t in range(n_rounds):
        loss, g = global_gradient(x, datasets, n_classes)
        hist.grad_norm_sq.append(float(np.sum(g ** 2)))
        hist.loss.append(loss)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged at slot {t}")
        draws = part_rng.random(N)
        updates = []
        for n, data in enumerate(datasets):
            flag = bool(draws[n] < q[t, n])
            x_local = local_sgd(x, data, q[t, n], cfg, batch_rngs[n], n_classes) if flag else None
            updates.append((x_local, flag))
        hist.participants.append(sum(f for _, f in updates))
        x = aggregate(x, updates)
    hist.params = x
    return hist


def fedavg_reference(datasets: Sequence[ClientDataset], cfg: SimConfig, n_rounds: int,
                     n_classes: int, seed: int = 0) -> list[np.ndarray]:
    """Plain full-participation FedAvg trajectory [x_0, ..., x_T] on the same random streams."""
    N = len(datasets)
    d = datasets[0].X.shape[1]
    init_rng, part_rng, batch_rngs = _streams(seed, N)
    x = init_rng.normal(0.0, 0.01, n_params(d, n_classes))
    traj = [x]
    for _ in range(n_rounds):
        part_rng.random(N)
        ends = []
        for n, data in enumerate(datasets):
            xl = x.copy()
            for _ in range(cfg.local_iters):
                idx = batch_rngs[n].choice(len(data), size=cfg.batch_size, replace=False)
                xl -= cfg.learning_rate * loss_and_grad(xl, data.X[idx], data.y[idx], n_classes)[1]
            ends.append(xl - x)
        x = x + np.mean(np.stack(ends), axis=0)
        traj.append(x)
    return traj


class FederatedLogisticRegression(ClassifierMixin, BaseEstimator):
    """Softmax regression trained by partial-participation federated SGD.

    ``fit`` takes a ``groups`` array assigning each sample to a client; each
    client joins a round with probability ``participation`` and scales its
    local step by the inverse of that probability.

    Parameters
    ----------
    n_rounds : int
        Number of training slots.
    participation : float or array of shape (n_clients,)
        Per-slot participation probability.
    local_iters, batch_size, learning_rate :
        Local SGD settings.
    random_state : int
        Seed for initialisation, participation and mini-batch streams.
    """

    def __init__(self, n_rounds=100, participation=1.0, local_iters=1, batch_size=16,
                 learning_rate=0.05, random_state=0):
        self.n_rounds = n_rounds
        self.participation = participation
        self.local_iters = local_iters
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.random_state = random_state

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        if groups is None:
            groups = np.zeros(len(y), dtype=int)
        groups = np.asarray(groups)
        if groups.shape != y.shape:
            raise ValueError("groups must have one entry per sample")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        self.clients_ = np.unique(groups)
        datasets = [ClientDataset(X[groups == g], y_idx[groups == g]) for g in self.clients_]
        cfg = SimConfig(n_clients=len(datasets), local_iters=self.local_iters,
                        batch_size=self.batch_size, learning_rate=self.learning_rate)
        self.n_features_in_ = X.shape[1]
        self.history_ = train_federated(datasets, self.participation, cfg, self.n_rounds,
                                        len(self.classes_), seed=self.random_state or 0)
        W, b = _unpack(self.history_.params, X.shape[1], len(self.classes_))
        self.coef_, self.intercept_ = W, b
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_.T + self.intercept_

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
