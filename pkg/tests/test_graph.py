import gzip

import numpy as np
import pytest

from edgeflip.graph import (
    Graph,
    GraphFormatError,
    Split,
    degree,
    jaccard_prune,
    load_graph,
    normalize_adjacency,
    random_split,
    synthetic_sbm,
    write_graph,
)


def tiny_graph(edges, n=None, feature_dim=2, num_classes=2, seed=0):
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    if n is None:
        n = int(edges.max()) + 1 if edges.size else 1
    rng = np.random.default_rng(seed)
    features = rng.normal(size=(n, feature_dim))
    labels = rng.integers(0, num_classes, size=n)
    return Graph(features, labels, edges, num_classes)


class TestGraphType:
    def test_edges_canonicalized(self):
        g = tiny_graph([(1, 0), (0, 1), (2, 1)], n=3)
        assert g.num_edges == 2
        assert (g.edges == [[0, 1], [1, 2]]).all()

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError, match="self-loop"):
            tiny_graph([(0, 0)], n=2)

    def test_label_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            Graph(np.zeros((2, 1)), np.array([0, 5]), np.array([[0, 1]]), 2)

    def test_nonfinite_features_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            Graph(np.array([[np.nan], [0.0]]), np.array([0, 1]), np.array([[0, 1]]), 2)

    def test_handshake_identity(self):
        g = synthetic_sbm(3, (8, 8), 0.5, 0.1, 4)
        assert g.degrees().sum() == 2 * g.num_edges

    def test_arrays_immutable(self):
        g = tiny_graph([(0, 1)])
        with pytest.raises(ValueError):
            g.features[0, 0] = 1.0
        with pytest.raises(ValueError):
            g.edges[0, 0] = 1


class TestLoadWrite:
    def _write_files(self, tmp_path, features, edges, labels, gz=False):
        suffix = ".csv.gz" if gz else ".csv"
        paths = [tmp_path / f"{name}{suffix}" for name in ("x", "e", "y")]
        contents = [features, edges, labels]
        for path, text in zip(paths, contents):
            if gz:
                with gzip.open(path, "wt") as fh:
                    fh.write(text)
            else:
                path.write_text(text)
        return paths

    def test_basic_load(self, tmp_path):
        fx, fe, fy = self._write_files(
            tmp_path,
            "1.0,0.0\n0.0,1.0\n0.5,0.5\n",
            "0,1\n1,2\n",
            "0\n1\n1\n",
        )
        g = load_graph(fx, fe, fy)
        assert g.num_nodes == 3
        assert g.num_edges == 2
        assert g.num_classes == 2

    def test_reversed_duplicate_edges_merge(self, tmp_path):
        fx, fe, fy = self._write_files(
            tmp_path, "1.0\n2.0\n", "0,1\n1,0\n0,1\n", "0\n1\n"
        )
        g = load_graph(fx, fe, fy)
        assert g.num_edges == 1

    def test_single_node_no_edges(self, tmp_path):
        fx, fe, fy = self._write_files(tmp_path, "0.5\n", "", "0\n")
        g = load_graph(fx, fe, fy)
        assert g.num_nodes == 1
        assert g.num_edges == 0

    def test_zero_edges_rejected_for_multinode(self, tmp_path):
        fx, fe, fy = self._write_files(tmp_path, "0.5\n0.7\n", "", "0\n1\n")
        with pytest.raises(GraphFormatError, match="no edges"):
            load_graph(fx, fe, fy)

    def test_header_and_tsv_tolerated(self, tmp_path):
        fx = tmp_path / "x.tsv"
        fx.write_text("f0\tf1\n1.0\t2.0\n3.0\t4.0\n")
        fe = tmp_path / "e.csv"
        fe.write_text("0,1\n")
        fy = tmp_path / "y.txt"
        fy.write_text("0\n1\n")
        g = load_graph(fx, fe, fy)
        assert g.num_nodes == 2 and g.num_features == 2

    def test_inconsistent_counts_rejected(self, tmp_path):
        fx, fe, fy = self._write_files(tmp_path, "1.0\n2.0\n", "0,1\n", "0\n1\n0\n")
        with pytest.raises(GraphFormatError, match="labels"):
            load_graph(fx, fe, fy)

    def test_self_loop_row_rejected(self, tmp_path):
        fx, fe, fy = self._write_files(tmp_path, "1.0\n2.0\n", "0,1\n1,1\n", "0\n1\n")
        with pytest.raises(GraphFormatError, match="self-loop"):
            load_graph(fx, fe, fy)

    def test_parse_failure_names_line(self, tmp_path):
        fx, fe, fy = self._write_files(tmp_path, "1.0\nbad\n", "0,1\n", "0\n1\n")
        with pytest.raises(GraphFormatError, match=":2"):
            load_graph(fx, fe, fy)

    def test_header_only_features_rejected(self, tmp_path):
        fx, fe, fy = self._write_files(tmp_path, "name\n", "0,1\n", "0\n1\n")
        with pytest.raises(GraphFormatError, match="no feature rows"):
            load_graph(fx, fe, fy)

    def test_edge_endpoint_out_of_range(self, tmp_path):
        fx, fe, fy = self._write_files(tmp_path, "1.0\n2.0\n", "0,9\n", "0\n1\n")
        with pytest.raises(GraphFormatError, match="out of range"):
            load_graph(fx, fe, fy)

    def test_negative_label_rejected(self, tmp_path):
        fx, fe, fy = self._write_files(tmp_path, "1.0\n2.0\n", "0,1\n", "0\n-1\n")
        with pytest.raises(GraphFormatError, match="negative label"):
            load_graph(fx, fe, fy)

    def test_gzip_roundtrip(self, tmp_path):
        fx, fe, fy = self._write_files(
            tmp_path, "1.5,2.5\n3.5,4.5\n", "0,1\n", "0\n1\n", gz=True
        )
        g = load_graph(fx, fe, fy)
        assert g.num_nodes == 2

    def test_write_then_load_is_byte_stable(self, tmp_path):
        g = synthetic_sbm(11, (5, 5), 0.6, 0.2, 3)
        first = [tmp_path / n for n in ("x1.csv", "e1.csv", "y1.csv")]
        second = [tmp_path / n for n in ("x2.csv", "e2.csv", "y2.csv")]
        write_graph(g, *first)
        g2 = load_graph(*first)
        write_graph(g2, *second)
        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes()


class TestNormalizeAdjacency:
    def test_single_node(self):
        g = tiny_graph([], n=1)
        np.testing.assert_array_equal(normalize_adjacency(g, dense=True), [[1.0]])

    def test_two_nodes_one_edge(self):
        g = tiny_graph([(0, 1)])
        assert normalize_adjacency(g, dense=True) == pytest.approx(np.full((2, 2), 0.5))

    def test_path_graph_hand_computed(self):
        # D^{-1/2} (A + I) D^{-1/2} for the path 0-1-2, worked by hand.
        g = tiny_graph([(0, 1), (1, 2)])
        got = normalize_adjacency(g, dense=True)
        s = 1.0 / np.sqrt(6.0)
        want = np.array([[0.5, s, 0.0], [s, 1.0 / 3.0, s], [0.0, s, 0.5]])
        np.testing.assert_allclose(got, want, rtol=1e-15)

    def test_bitwise_symmetry_and_sparsity_pattern(self):
        g = synthetic_sbm(5, (6, 6), 0.5, 0.2, 3)
        dense = normalize_adjacency(g, dense=True)
        assert (dense == dense.T).all()
        adj = g.adjacency(dense=True)
        assert ((dense != 0) == ((adj + np.eye(g.num_nodes)) != 0)).all()


class TestDegree:
    def test_star_center(self):
        g = tiny_graph([(0, 1), (0, 2), (0, 3), (0, 4)])
        assert degree(g, 0) == 4
        assert degree(g, 1) == 1

    def test_isolated_node(self):
        g = tiny_graph([(0, 1)], n=3)
        assert degree(g, 2) == 0

    def test_out_of_range(self):
        g = tiny_graph([(0, 1)])
        with pytest.raises(IndexError):
            degree(g, 7)


class TestJaccardPrune:
    def test_identical_supports_kept(self):
        features = np.array([[1.0, 2.0], [3.0, 1.0]])
        g = Graph(features, np.array([0, 1]), np.array([[0, 1]]), 2)
        assert jaccard_prune(g, 1.0).num_edges == 1

    def test_disjoint_supports_pruned(self):
        features = np.array([[1.0, 0.0], [0.0, 1.0]])
        g = Graph(features, np.array([0, 1]), np.array([[0, 1]]), 2)
        assert jaccard_prune(g, 0.01).num_edges == 0
        assert jaccard_prune(g, 0.0).num_edges == 1

    def test_empty_supports_count_as_similar(self):
        features = np.zeros((2, 3))
        g = Graph(features, np.array([0, 1]), np.array([[0, 1]]), 2)
        assert jaccard_prune(g, 1.0).num_edges == 1

    def test_threshold_validated(self):
        g = tiny_graph([(0, 1)])
        with pytest.raises(ValueError):
            jaccard_prune(g, 1.5)

    def test_matches_per_edge_brute_force(self):
        rng = np.random.default_rng(42)
        features = (rng.random((8, 6)) < 0.4).astype(float) * rng.random((8, 6))
        edges = [(u, v) for u in range(8) for v in range(u + 1, 8) if rng.random() < 0.5]
        g = Graph(features, rng.integers(0, 2, 8), np.array(edges), 2)

        def jac(u, v):
            su = set(np.flatnonzero(features[u] > 0))
            sv = set(np.flatnonzero(features[v] > 0))
            if not su and not sv:
                return 1.0
            return len(su & sv) / len(su | sv)

        threshold = 0.2
        expected = sorted((u, v) for u, v in edges if jac(u, v) >= threshold)
        pruned = jaccard_prune(g, threshold)
        assert [tuple(e) for e in pruned.edges] == expected

    def test_never_adds_edges_or_touches_node_data(self):
        g = synthetic_sbm(9, (5, 5), 0.7, 0.3, 4)
        pruned = jaccard_prune(g, 0.3)
        original = {tuple(e) for e in g.edges}
        assert {tuple(e) for e in pruned.edges} <= original
        assert pruned.features is g.features
        assert pruned.labels is g.labels


class TestSyntheticSbm:
    def test_deterministic_limit_two_triangles(self):
        g = synthetic_sbm(0, (3, 3), 1.0, 0.0, 2)
        expected = {(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)}
        assert {tuple(e) for e in g.edges} == expected
        assert list(g.labels) == [0, 0, 0, 1, 1, 1]

    def test_same_seed_same_graph(self):
        a = synthetic_sbm(7, (6, 6), 0.5, 0.1, 3)
        b = synthetic_sbm(7, (6, 6), 0.5, 0.1, 3)
        assert (a.edges == b.edges).all()
        assert (a.features == b.features).all()

    def test_edge_count_near_binomial_expectation(self):
        g = synthetic_sbm(123, (10, 10), 0.8, 0.05, 4)
        pairs_in = 2 * 45
        pairs_out = 100
        mean = pairs_in * 0.8 + pairs_out * 0.05
        var = pairs_in * 0.8 * 0.2 + pairs_out * 0.05 * 0.95
        assert abs(g.num_edges - mean) <= 3 * np.sqrt(var)

    def test_empty_block_rejected(self):
        with pytest.raises(ValueError):
            synthetic_sbm(0, (3, 0), 0.5, 0.5, 2)


class TestRandomSplit:
    def test_ratio_sizes(self):
        g = synthetic_sbm(1, (50, 50), 0.2, 0.02, 4)
        s = random_split(g, 0)
        assert (len(s.train), len(s.valid), len(s.test)) == (10, 10, 80)

    def test_deterministic(self):
        g = synthetic_sbm(1, (20, 20), 0.3, 0.05, 4)
        a = random_split(g, 5)
        b = random_split(g, 5)
        assert (a.train == b.train).all() and (a.test == b.test).all()

    def test_different_seeds_differ(self):
        g = synthetic_sbm(1, (500, 500), 0.01, 0.001, 2)
        a = random_split(g, 0)
        b = random_split(g, 1)
        assert not (a.train == b.train).all()

    def test_disjoint_and_complete(self):
        g = synthetic_sbm(2, (15, 15), 0.4, 0.1, 3)
        s = random_split(g, 3)
        union = np.union1d(np.union1d(s.train, s.valid), s.test)
        assert (union == np.arange(30)).all()

    def test_too_small_rejected(self):
        g = synthetic_sbm(0, (2, 2), 1.0, 0.5, 2)
        with pytest.raises(ValueError, match="too few"):
            random_split(g, 0)

    def test_split_disjointness_enforced(self):
        with pytest.raises(ValueError, match="disjoint"):
            Split(np.array([0, 1]), np.array([1, 2]), np.array([3]))
