"""Scikit-learn style estimators wrapping the graph kernels.

These classes expose the victim/surrogate models and the edge-pruning
defense through the familiar ``fit``/``predict``/``transform`` +
``get_params`` surface so they compose with scikit-learn tooling
(``clone``, grid utilities, pipelines over graph-shaped inputs).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_graph, check_split
from .graph import Graph, jaccard_prune
from .models import ARCH_GCN2, ARCH_SGC, ModelConfig, margin, train


class _GraphClassifier(BaseEstimator):
    """Shared transductive fit/predict machinery."""

    _arch = None

    def fit(self, graph: Graph, split):
        g = check_graph(graph)
        check_split(g, split)
        self.model_ = train(self._config(g), g, split)
        self.classes_ = np.arange(g.num_classes)
        return self

    def _logits(self, graph=None) -> np.ndarray:
        check_is_fitted(self, "model_")
        if graph is None:
            return self.model_.logits
        return self.model_.logits_on(check_graph(graph))

    def decision_function(self, graph: Graph | None = None) -> np.ndarray:
        """Per-node logits, on the training graph or a perturbed one."""
        return self._logits(graph)

    def predict(self, graph: Graph | None = None) -> np.ndarray:
        return self._logits(graph).argmax(axis=1)

    def predict_proba(self, graph: Graph | None = None) -> np.ndarray:
        logits = self._logits(graph)
        shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
        return shifted / shifted.sum(axis=1, keepdims=True)

    def margins(self, labels, graph: Graph | None = None) -> np.ndarray:
        """Classification margin of every node against the given labels."""
        logits = self._logits(graph)
        return np.array([margin(logits[v], labels[v]) for v in range(len(logits))])

    def score(self, graph: Graph, node_ids) -> float:
        """Accuracy on ``node_ids`` of ``graph`` (labels come from the graph)."""
        g = check_graph(graph)
        node_ids = np.asarray(node_ids, dtype=np.int64)
        return float((self.predict(g)[node_ids] == g.labels[node_ids]).mean())


class GCNClassifier(_GraphClassifier):
    """Two-layer graph convolutional classifier (transductive)."""

    _arch = ARCH_GCN2

    def __init__(self, hidden=32, learning_rate=0.01, dropout=0.5,
                 weight_decay=5e-4, max_epochs=1000, patience=50,
                 early_stop_metric="accuracy", seed=0):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.dropout = dropout
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.early_stop_metric = early_stop_metric
        self.seed = seed

    def _config(self, g: Graph) -> ModelConfig:
        return ModelConfig(
            arch=self._arch,
            hidden=self.hidden,
            learning_rate=self.learning_rate,
            dropout=self.dropout,
            weight_decay=self.weight_decay,
            max_epochs=self.max_epochs,
            patience=self.patience,
            early_stop_metric=self.early_stop_metric,
            seed=self.seed,
        )


class SGCClassifier(_GraphClassifier):
    """Linearized graph convolution ``A_hat^hops X W`` (transductive)."""

    _arch = ARCH_SGC

    def __init__(self, hops=2, learning_rate=0.01, weight_decay=5e-4,
                 max_epochs=1000, patience=50, early_stop_metric="accuracy",
                 seed=0):
        self.hops = hops
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.early_stop_metric = early_stop_metric
        self.seed = seed

    def _config(self, g: Graph) -> ModelConfig:
        return ModelConfig(
            arch=self._arch,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            max_epochs=self.max_epochs,
            patience=self.patience,
            early_stop_metric=self.early_stop_metric,
            seed=self.seed,
            hops=self.hops,
        )


class JaccardEdgePruner(BaseEstimator):
    """Defense transformer: drop edges with low binarized-feature similarity."""

    def __init__(self, threshold=0.01):
        self.threshold = threshold

    def fit(self, graph: Graph | None = None, y=None):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        self.n_features_in_ = None if graph is None else graph.num_features
        return self

    def transform(self, graph: Graph) -> Graph:
        check_is_fitted(self, "n_features_in_")
        return jaccard_prune(check_graph(graph), self.threshold)

    def fit_transform(self, graph: Graph, y=None) -> Graph:
        return self.fit(graph).transform(graph)
