"""Neural kernels for the victim and surrogate models.

Two architectures, written directly on numpy/scipy:

* ``gcn2`` -- a two-layer graph convolution ``A_hat relu(A_hat X W1) W2``
  with dropout between the layers during training.
* ``sgc`` -- the linearized variant ``A_hat^hops X W``.

Both are trained with Adam on softmax cross-entropy with L2 weight decay and
early stopping on a validation metric. All gradients, including the gradient
of the loss with respect to the raw symmetric adjacency (propagated through
the ``D^{-1/2} (A + I) D^{-1/2}`` normalization), are computed analytically.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph, _check_dense, normalize_adjacency

ARCH_GCN2 = "gcn2"
ARCH_SGC = "sgc"

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8

# Convert features to CSR inside training when they are this sparse or more.
_SPARSE_FEATURE_DENSITY = 0.25

MODEL_FILE_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"non-finite training loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class ModelConfig:
    """One hyper-parameter configuration.

    ``sgc`` ignores ``hidden`` and ``dropout``; they are recorded as unused
    rather than rejected (see :meth:`unused_fields`).
    """

    arch: str = ARCH_GCN2
    hidden: int = 32
    learning_rate: float = 0.01
    dropout: float = 0.5
    weight_decay: float = 5e-4
    max_epochs: int = 1000
    patience: int = 50
    seed: int = 0
    hops: int = 2
    early_stop_metric: str = "accuracy"

    def __post_init__(self):
        if self.arch not in (ARCH_GCN2, ARCH_SGC):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.arch == ARCH_GCN2 and self.hidden < 1:
            raise ValueError("hidden must be >= 1 for gcn2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.max_epochs < 1 or self.patience < 0 or self.hops < 0:
            raise ValueError("max_epochs must be >= 1, patience and hops >= 0")
        if self.early_stop_metric not in ("accuracy", "loss"):
            raise ValueError("early_stop_metric must be 'accuracy' or 'loss'")

    def unused_fields(self) -> tuple[str, ...]:
        return ("hidden", "dropout") if self.arch == ARCH_SGC else ()


@dataclass(frozen=True)
class TrainedModel:
    """Frozen weights plus cached evaluation-mode logits on the training graph."""

    config: ModelConfig
    weights: tuple[np.ndarray, ...]
    norm_adj: sp.csr_matrix
    logits: np.ndarray
    best_epoch: int
    best_val_metric: float
    epochs_trained: int

    @property
    def predictions(self) -> np.ndarray:
        return self.logits.argmax(axis=1)

    def logits_on(self, g: Graph) -> np.ndarray:
        """Evaluation-mode forward pass of the frozen weights on ``g``."""
        norm_adj = normalize_adjacency(g)
        if self.config.arch == ARCH_GCN2:
            return forward_gcn2(self.weights, norm_adj, g.features)
        return forward_sgc(self.weights[0], norm_adj, g.features, self.config.hops)

    def predict_on(self, g: Graph) -> np.ndarray:
        return self.logits_on(g).argmax(axis=1)


def glorot_uniform(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def forward_gcn2(weights, norm_adj, features) -> np.ndarray:
    """Logits of the two-layer GCN: ``A_hat relu(A_hat X W1) W2``."""
    w1, w2 = weights
    if features.shape[1] != w1.shape[0] or w1.shape[1] != w2.shape[0]:
        raise ValueError(
            f"shape mismatch: features {features.shape}, W1 {w1.shape}, W2 {w2.shape}"
        )
    hidden = _relu(norm_adj @ (features @ w1))
    return norm_adj @ (hidden @ w2)


def forward_sgc(weight, norm_adj, features, hops: int = 2) -> np.ndarray:
    """Logits of the linearized model: ``A_hat^hops X W``."""
    if features.shape[1] != weight.shape[0]:
        raise ValueError(f"shape mismatch: features {features.shape}, W {weight.shape}")
    out = features @ weight
    for _ in range(hops):
        out = norm_adj @ out
    return out


def margin(logits_row, y: int) -> float:
    """Score of the true class minus the best wrong-class score.

    Positive iff the row is confidently classified as ``y``.
    """
    row = np.asarray(logits_row, dtype=np.float64).ravel()
    if row.size < 2:
        raise ValueError("margin needs at least two classes")
    if not 0 <= y < row.size:
        raise ValueError(f"label {y} out of range [0, {row.size})")
    others = np.delete(row, y)
    return float(row[y] - others.max())


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray, node_ids) -> float:
    """Mean softmax cross-entropy of ``logits`` rows at ``node_ids``."""
    node_ids = np.asarray(node_ids, dtype=np.int64)
    if node_ids.size == 0:
        raise ValueError("node set is empty")
    log_probs = _log_softmax(logits[node_ids])
    return float(-log_probs[np.arange(node_ids.size), labels[node_ids]].mean())


def _loss_gradient(logits, labels, node_ids):
    """(loss, dloss/dlogits) for mean cross-entropy over ``node_ids``."""
    node_ids = np.asarray(node_ids, dtype=np.int64)
    log_probs = _log_softmax(logits[node_ids])
    loss = float(-log_probs[np.arange(node_ids.size), labels[node_ids]].mean())
    grad = np.zeros_like(logits)
    rows = np.exp(log_probs)
    rows[np.arange(node_ids.size), labels[node_ids]] -= 1.0
    grad[node_ids] = rows / node_ids.size
    return loss, grad


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float):
        self.lr = lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= _ADAM_BETA1
            m += (1 - _ADAM_BETA1) * g
            v *= _ADAM_BETA2
            v += (1 - _ADAM_BETA2) * g * g
            m_hat = m / (1 - _ADAM_BETA1 ** self.t)
            v_hat = v / (1 - _ADAM_BETA2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)


def _maybe_sparse_features(x: np.ndarray):
    density = np.count_nonzero(x) / max(x.size, 1)
    if density < _SPARSE_FEATURE_DENSITY and x.shape[1] >= 32:
        return sp.csr_matrix(x)
    return x


def train(config: ModelConfig, g: Graph, split) -> TrainedModel:
    """Train one model on ``split.train`` with early stopping on ``split.valid``.

    Deterministic for a fixed config (the RNG streams for initialization and
    dropout are derived from ``config.seed``). The returned model carries the
    snapshot with the best validation metric and evaluation-mode logits on
    the training graph.
    """
    train_idx = np.asarray(split.train, dtype=np.int64)
    valid_idx = np.asarray(split.valid, dtype=np.int64)
    if train_idx.size == 0:
        raise ValueError("training set is empty")
    labels = g.labels
    norm_adj = normalize_adjacency(g)
    n_classes = g.num_classes

    seed_seq = np.random.SeedSequence(config.seed)
    init_rng, dropout_rng = (np.random.default_rng(s) for s in seed_seq.spawn(2))

    x = _maybe_sparse_features(g.features)
    if config.arch == ARCH_GCN2:
        prop_x = norm_adj @ x  # hoisted: first layer is ((A_hat X) W1)
        weights = [
            glorot_uniform((g.num_features, config.hidden), init_rng),
            glorot_uniform((config.hidden, n_classes), init_rng),
        ]
    else:
        prop_x = x
        for _ in range(config.hops):
            prop_x = norm_adj @ prop_x
        weights = [glorot_uniform((g.num_features, n_classes), init_rng)]

    maximize = config.early_stop_metric == "accuracy"
    best_value = -np.inf if maximize else np.inf
    best_weights = [w.copy() for w in weights]
    best_epoch = 0
    since_best = 0
    optimizer = _Adam(weights, config.learning_rate)

    for epoch in range(config.max_epochs):
        if config.arch == ARCH_GCN2:
            w1, w2 = weights
            pre = prop_x @ w1
            hidden = _relu(pre)
            if config.dropout > 0:
                keep = 1.0 - config.dropout
                mask = (dropout_rng.random(hidden.shape) < keep) / keep
                dropped = hidden * mask
            else:
                mask = None
                dropped = hidden
            logits = norm_adj @ (dropped @ w2)
            eval_logits = norm_adj @ (hidden @ w2)
        else:
            logits = prop_x @ weights[0]
            eval_logits = logits

        loss, dlogits = _loss_gradient(logits, labels, train_idx)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch)

        if maximize:
            value = float((eval_logits[valid_idx].argmax(1) == labels[valid_idx]).mean())
            improved = value > best_value
        else:
            value = cross_entropy(eval_logits, labels, valid_idx)
            improved = value < best_value
        if improved:
            best_value = value
            best_weights = [w.copy() for w in weights]
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best > config.patience:
                epochs_trained = epoch + 1
                break

        if config.arch == ARCH_GCN2:
            back = norm_adj @ dlogits
            grad_w2 = dropped.T @ back
            dhidden = back @ w2.T
            if mask is not None:
                dhidden = dhidden * mask
            dpre = dhidden * (pre > 0)
            grad_w1 = np.asarray(prop_x.T @ dpre)
            grads = [grad_w1, grad_w2]
        else:
            grads = [np.asarray(prop_x.T @ dlogits)]
        if config.weight_decay > 0:
            for w, grad in zip(weights, grads):
                grad += config.weight_decay * w
        optimizer.step(weights, grads)
    else:
        epochs_trained = config.max_epochs

    final = tuple(w.copy() for w in best_weights)
    if config.arch == ARCH_GCN2:
        logits = forward_gcn2(final, norm_adj, g.features)
    else:
        logits = forward_sgc(final[0], norm_adj, g.features, config.hops)
    return TrainedModel(
        config=config,
        weights=final,
        norm_adj=norm_adj,
        logits=logits,
        best_epoch=best_epoch,
        best_val_metric=best_value,
        epochs_trained=epochs_trained,
    )


def loss_and_grads(model: TrainedModel, g: Graph, node_set):
    """Loss and exact gradients of mean cross-entropy over ``node_set``.

    Evaluation-mode forward pass of ``model.weights`` on ``g``. Returns
    ``(loss, weight_grads, adjacency_grad)`` where ``adjacency_grad[u, v]``
    is the derivative of the loss when the unordered pair ``(u, v)`` of the
    raw symmetric adjacency moves together (both entries), propagated through
    the degree normalization. The diagonal is zeroed (self-loops are fixed).
    """
    node_set = np.asarray(node_set, dtype=np.int64)
    if node_set.size == 0:
        raise ValueError("node set is empty")
    _check_dense(g.num_nodes)
    s = normalize_adjacency(g, dense=True)
    x = g.features
    labels = g.labels
    cfg = model.config

    if cfg.arch == ARCH_GCN2:
        w1, w2 = model.weights
        xw1 = x @ w1
        pre = s @ xw1
        hidden = _relu(pre)
        hw2 = hidden @ w2
        logits = s @ hw2
        loss, dlogits = _loss_gradient(logits, labels, node_set)
        back = s @ dlogits
        grad_w2 = hidden.T @ back
        dpre = (back @ w2.T) * (pre > 0)
        grad_w1 = x.T @ (s @ dpre)
        weight_grads = [grad_w1, grad_w2]
        # dL/dS for logits = S relu(S (X W1)) W2: one term per S factor.
        p = dlogits @ hw2.T + dpre @ xw1.T
    else:
        w = model.weights[0]
        rights = [x @ w]
        for _ in range(cfg.hops):
            rights.append(s @ rights[-1])
        logits = rights[-1]
        loss, dlogits = _loss_gradient(logits, labels, node_set)
        left = dlogits
        p = np.zeros((g.num_nodes, g.num_nodes))
        for i in range(cfg.hops):
            p += left @ rights[cfg.hops - 1 - i].T
            left = s @ left
        weight_grads = [x.T @ left]

    adjacency_grad = _adjacency_pair_grad(g, s, p)
    return loss, weight_grads, adjacency_grad


def _adjacency_pair_grad(g: Graph, s: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Chain ``dL/dS`` through ``S = D^{-1/2} (A + I) D^{-1/2}``.

    With ``t_u = (1 + d_u)^{-1/2}`` the entrywise derivative is
    ``t_p t_q P_pq - rowsum_p / (2 (1 + d_p))`` where
    ``rowsum_p = sum_v (P_pv + P_vp) S_pv``; the unordered-pair gradient is
    its symmetrization.
    """
    d = g.degrees().astype(np.float64)
    t = 1.0 / np.sqrt(1.0 + d)
    rowsum = ((p + p.T) * s).sum(axis=1)
    entry = t[:, None] * t[None, :] * p - (rowsum / (2.0 * (1.0 + d)))[:, None]
    pair = entry + entry.T
    np.fill_diagonal(pair, 0.0)
    return pair


def save_model(model: TrainedModel, path) -> None:
    """Write a versioned JSON snapshot of the config and weight matrices."""
    payload = {
        "format": "edgeflip-model",
        "version": MODEL_FILE_VERSION,
        "config": asdict(model.config),
        "weights": [w.tolist() for w in model.weights],
    }
    Path(path).write_text(json.dumps(payload))


def load_model(path, g: Graph) -> TrainedModel:
    """Rebuild a :class:`TrainedModel` from a snapshot, recomputing the
    cached logits on ``g``."""
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != "edgeflip-model":
        raise ValueError(f"{path} is not a model snapshot")
    if payload.get("version") != MODEL_FILE_VERSION:
        raise ValueError(f"unsupported snapshot version {payload.get('version')}")
    config = ModelConfig(**payload["config"])
    weights = tuple(np.array(w, dtype=np.float64) for w in payload["weights"])
    norm_adj = normalize_adjacency(g)
    if config.arch == ARCH_GCN2:
        logits = forward_gcn2(weights, norm_adj, g.features)
    else:
        logits = forward_sgc(weights[0], norm_adj, g.features, config.hops)
    return TrainedModel(
        config=config,
        weights=weights,
        norm_adj=norm_adj,
        logits=logits,
        best_epoch=-1,
        best_val_metric=float("nan"),
        epochs_trained=0,
    )
