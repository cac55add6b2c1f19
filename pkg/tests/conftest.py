import numpy as np
import pytest

from edgeflip.graph import Graph, normalize_adjacency
from edgeflip.models import (
    ARCH_GCN2,
    ModelConfig,
    TrainedModel,
    forward_gcn2,
    forward_sgc,
)


def random_graph(rng, n, edge_prob=0.5, feature_dim=4, num_classes=3, ensure_edge=True):
    """Random attributed graph for oracle checks."""
    edges = [
        (u, v)
        for u in range(n)
        for v in range(u + 1, n)
        if rng.random() < edge_prob
    ]
    if ensure_edge and not edges:
        edges = [(0, min(1, n - 1))] if n > 1 else []
    features = rng.normal(size=(n, feature_dim))
    labels = rng.integers(0, num_classes, size=n)
    return Graph(features, labels, np.array(edges).reshape(-1, 2), num_classes)


def make_model(g, config=None, weights=None, rng=None):
    """Assemble a TrainedModel directly from given (or random) weights."""
    if config is None:
        config = ModelConfig(hidden=5, dropout=0.0)
    rng = rng or np.random.default_rng(0)
    if weights is None:
        if config.arch == ARCH_GCN2:
            weights = (
                rng.normal(size=(g.num_features, config.hidden)),
                rng.normal(size=(config.hidden, g.num_classes)),
            )
        else:
            weights = (rng.normal(size=(g.num_features, g.num_classes)),)
    norm_adj = normalize_adjacency(g)
    if config.arch == ARCH_GCN2:
        logits = forward_gcn2(weights, norm_adj, g.features)
    else:
        logits = forward_sgc(weights[0], norm_adj, g.features, config.hops)
    return TrainedModel(
        config=config,
        weights=tuple(weights),
        norm_adj=norm_adj,
        logits=logits,
        best_epoch=0,
        best_val_metric=float("nan"),
        epochs_trained=0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
