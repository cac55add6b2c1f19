"""Hypothesis property tests for the data-model invariants."""

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from edgeflip.graph import (
    Graph,
    jaccard_prune,
    normalize_adjacency,
    random_split,
    synthetic_sbm,
)
from edgeflip.models import margin


@st.composite
def graphs(draw, max_nodes=12):
    n = draw(st.integers(min_value=2, max_value=max_nodes))
    seed = draw(st.integers(min_value=0, max_value=2**31 - 1))
    rng = np.random.default_rng(seed)
    density = draw(st.floats(min_value=0.0, max_value=1.0))
    edges = [(u, v) for u in range(n) for v in range(u + 1, n)
             if rng.random() < density]
    features = rng.normal(size=(n, draw(st.integers(1, 5))))
    # sparsify features so Jaccard supports vary
    features[rng.random(features.shape) < 0.5] = 0.0
    labels = rng.integers(0, 2, size=n)
    return Graph(features, labels, np.array(edges).reshape(-1, 2), 2)


class TestGraphInvariants:
    @given(graphs())
    def test_handshake_identity(self, g):
        assert g.degrees().sum() == 2 * g.num_edges

    @given(graphs())
    def test_normalized_adjacency_symmetric_with_self_loops(self, g):
        s = normalize_adjacency(g, dense=True)
        assert (s == s.T).all()
        assert (np.diag(s) > 0).all()
        expected = 1.0 / np.sqrt(
            (1.0 + g.degrees())[:, None] * (1.0 + g.degrees())[None, :])
        mask = (g.adjacency(dense=True) + np.eye(g.num_nodes)) > 0
        np.testing.assert_allclose(s[mask], expected[mask])
        assert (s[~mask] == 0).all()

    @given(graphs(), st.floats(min_value=0.0, max_value=1.0))
    def test_jaccard_prune_only_removes_edges(self, g, threshold):
        pruned = jaccard_prune(g, threshold)
        assert {tuple(e) for e in pruned.edges} <= {tuple(e) for e in g.edges}
        assert pruned.features is g.features
        assert pruned.labels is g.labels
        # threshold 0 keeps everything
        assert jaccard_prune(g, 0.0).num_edges == g.num_edges

    @given(st.integers(10, 60), st.integers(0, 2**31 - 1))
    def test_random_split_partitions_nodes(self, n, seed):
        g = synthetic_sbm(1, (n, n), 0.2, 0.05, 3)
        split = random_split(g, seed, (0.2, 0.2, 0.6))
        union = np.concatenate([split.train, split.valid, split.test])
        assert sorted(union) == list(range(2 * n))
        assert len(split.train) == int(0.2 * 2 * n)

    @given(st.integers(0, 2**31 - 1))
    def test_sbm_pure_function_of_seed(self, seed):
        a = synthetic_sbm(seed, (5, 5), 0.5, 0.1, 3)
        b = synthetic_sbm(seed, (5, 5), 0.5, 0.1, 3)
        assert (a.edges == b.edges).all() and (a.features == b.features).all()


class TestMarginInvariants:
    @given(st.lists(st.floats(min_value=-50, max_value=50), min_size=2,
                    max_size=8), st.data())
    def test_sign_tracks_classification(self, row, data):
        y = data.draw(st.integers(0, len(row) - 1))
        m = margin(row, y)
        pred = int(np.argmax(row))
        if m > 0:
            assert pred == y
        if pred != y:
            assert m <= 0
