"""Undirected attributed graphs: data model, file IO, and preprocessing.

Graphs are stored as canonical edge lists (each unordered pair appears once
as ``u < v``, rows sorted lexicographically). Dense ``N x N`` matrices are
only materialized on demand and guarded by :data:`DENSE_LIMIT`.
"""

from __future__ import annotations

import gzip
import io
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

# Largest node count for which dense N x N matrices may be materialized.
DENSE_LIMIT = 5000

DEFAULT_SPLIT_RATIOS = (0.1, 0.1, 0.8)


class GraphFormatError(ValueError):
    """Raised when dataset files cannot be parsed into a valid graph."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected attributed graph with integer node labels.

    Parameters
    ----------
    features : ndarray of shape (num_nodes, num_features)
        Finite real-valued node attributes.
    labels : ndarray of shape (num_nodes,)
        Integer class ids in ``[0, num_classes)``.
    edges : ndarray of shape (num_edges, 2)
        Unordered node pairs; canonicalized so each row has ``u < v`` and
        rows are sorted and unique. Self-loops are rejected.
    num_classes : int
        Number of classes, at least 2.
    """

    features: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = _freeze(np.ascontiguousarray(self.features, dtype=np.float64))
        labels = _freeze(np.ascontiguousarray(self.labels, dtype=np.int64))
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)

        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n = features.shape[0]
        if labels.shape != (n,):
            raise ValueError(
                f"labels shape {labels.shape} inconsistent with {n} feature rows"
            )
        if not np.isfinite(features).all():
            raise ValueError("features contain non-finite values")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"labels must lie in [0, {self.num_classes})")

        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge endpoint out of range")
            if (edges[:, 0] == edges[:, 1]).any():
                raise ValueError("self-loops are not allowed")
            edges = np.sort(edges, axis=1)
            edges = np.unique(edges, axis=0)
        else:
            edges = edges.reshape(0, 2)

        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "edges", _freeze(edges))

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def _csr(self) -> sp.csr_matrix:
        n = self.num_nodes
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(u))
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def _edge_keys(self) -> frozenset:
        return frozenset((int(u), int(v)) for u, v in self.edges)

    def degrees(self) -> np.ndarray:
        """Degree of every node (self-loops excluded by construction)."""
        d = np.zeros(self.num_nodes, dtype=np.int64)
        if self.num_edges:
            np.add.at(d, self.edges[:, 0], 1)
            np.add.at(d, self.edges[:, 1], 1)
        return d

    def degree(self, v: int) -> int:
        if not 0 <= v < self.num_nodes:
            raise IndexError(f"node id {v} out of range [0, {self.num_nodes})")
        return int(self._csr.indptr[v + 1] - self._csr.indptr[v])

    def neighbors(self, v: int) -> np.ndarray:
        if not 0 <= v < self.num_nodes:
            raise IndexError(f"node id {v} out of range [0, {self.num_nodes})")
        return np.sort(self._csr.indices[self._csr.indptr[v]:self._csr.indptr[v + 1]])

    def has_edge(self, u: int, v: int) -> bool:
        key = (u, v) if u < v else (v, u)
        return key in self._edge_keys

    def adjacency(self, dense: bool = False):
        """Symmetric 0/1 adjacency matrix, sparse CSR by default."""
        if dense:
            _check_dense(self.num_nodes)
            return self._csr.toarray()
        return self._csr.copy()

    def replace_edges(self, edges: np.ndarray) -> "Graph":
        """New graph with the same features/labels and a different edge set."""
        return Graph(self.features, self.labels, edges, self.num_classes)


@dataclass(frozen=True)
class Split:
    """Disjoint train/valid/test node index sets for one random split."""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "valid", "test"):
            arr = _freeze(np.sort(np.asarray(getattr(self, name), dtype=np.int64)))
            if arr.size == 0:
                raise ValueError(f"{name} set is empty")
            if arr.min() < 0:
                raise ValueError(f"{name} set contains negative node ids")
            if len(np.unique(arr)) != len(arr):
                raise ValueError(f"{name} set contains duplicate node ids")
            object.__setattr__(self, name, arr)
        total = len(self.train) + len(self.valid) + len(self.test)
        union = np.union1d(np.union1d(self.train, self.valid), self.test)
        if len(union) != total:
            raise ValueError("train/valid/test sets are not pairwise disjoint")


def _check_dense(n: int) -> None:
    if n > DENSE_LIMIT:
        raise ValueError(
            f"dense materialization refused for {n} nodes (limit {DENSE_LIMIT})"
        )


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def _split_row(line: str) -> list[str]:
    if "\t" in line:
        return [f.strip() for f in line.split("\t")]
    if "," in line:
        return [f.strip() for f in line.split(",")]
    return line.split()


def _read_table(path, converter, what: str) -> list:
    """Parse one delimited file; a single non-numeric first row is a header."""
    rows = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = _split_row(line)
            try:
                rows.append(converter(fields))
            except ValueError as exc:
                if lineno == 1:
                    continue  # header row
                raise GraphFormatError(f"{path}:{lineno}: {exc} ({what})") from None
    return rows


def load_graph(features_path, edges_path, labels_path) -> Graph:
    """Load a graph from features/edges/labels files.

    Features are CSV/TSV/whitespace-delimited floats (one row per node,
    optional header); edges are two integer columns (one undirected edge per
    row, duplicates and reversed rows deduplicated); labels are one integer
    per line. ``.gz`` variants are accepted by extension.
    """
    feat_rows = _read_table(features_path, lambda f: [float(x) for x in f], "features")
    if not feat_rows:
        raise GraphFormatError(f"{features_path}: no feature rows")
    width = len(feat_rows[0])
    if any(len(r) != width for r in feat_rows):
        raise GraphFormatError(f"{features_path}: inconsistent row widths")
    features = np.array(feat_rows, dtype=np.float64)
    n = features.shape[0]

    label_rows = _read_table(labels_path, lambda f: _one_int(f), "labels")
    if len(label_rows) != n:
        raise GraphFormatError(
            f"{labels_path}: {len(label_rows)} labels for {n} feature rows"
        )
    labels = np.array(label_rows, dtype=np.int64)
    if labels.min() < 0:
        raise GraphFormatError(f"{labels_path}: negative label")

    edge_rows = _read_table(edges_path, lambda f: _two_ints(f), "edges")
    edges = np.array(edge_rows, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        if edges.min() < 0 or edges.max() >= n:
            raise GraphFormatError(f"{edges_path}: edge endpoint out of range [0, {n})")
        if (edges[:, 0] == edges[:, 1]).any():
            bad = int(np.flatnonzero(edges[:, 0] == edges[:, 1])[0])
            raise GraphFormatError(f"{edges_path}: self-loop in row {bad + 1}")
    elif n > 1:
        raise GraphFormatError(f"{edges_path}: no edges parsed")

    num_classes = max(2, int(labels.max()) + 1)
    return Graph(features, labels, edges, num_classes)


def _one_int(fields: list[str]) -> int:
    if len(fields) != 1:
        raise ValueError(f"expected one integer, got {len(fields)} fields")
    return int(fields[0])


def _two_ints(fields: list[str]) -> tuple[int, int]:
    if len(fields) != 2:
        raise ValueError(f"expected two integers, got {len(fields)} fields")
    return int(fields[0]), int(fields[1])


def write_graph(g: Graph, features_path, edges_path, labels_path) -> None:
    """Write a graph in the canonical on-disk form.

    Comma-separated, no headers, edges sorted with ``u < v``, floats in
    shortest round-trip notation, so loading and re-writing a dataset is
    byte-stable.
    """

    def _writer(path):
        path = Path(path)
        if path.suffix == ".gz":
            return io.TextIOWrapper(gzip.GzipFile(path, "wb", mtime=0), encoding="utf-8")
        return open(path, "w", encoding="utf-8")

    with _writer(features_path) as fh:
        for row in g.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with _writer(edges_path) as fh:
        for u, v in g.edges:
            fh.write(f"{u},{v}\n")
    with _writer(labels_path) as fh:
        for y in g.labels:
            fh.write(f"{y}\n")


def degree(g: Graph, v: int) -> int:
    """Number of neighbors of ``v`` (no self-loop contribution)."""
    return g.degree(v)


def normalize_adjacency(g: Graph, dense: bool = False):
    """Symmetrically normalized adjacency with self-loops.

    Entry ``(u, v)`` is ``1 / sqrt((d_u + 1) (d_v + 1))`` when ``u == v`` or
    ``(u, v)`` is an edge, and 0 otherwise. The result is exactly symmetric
    (bitwise) because off-diagonal values are built from one commutative
    product per pair.
    """
    n = g.num_nodes
    t = 1.0 / np.sqrt(1.0 + g.degrees().astype(np.float64))
    u, v = g.edges[:, 0], g.edges[:, 1]
    off = t[u] * t[v]
    data = np.concatenate([off, off, t * t])
    rows = np.concatenate([u, v, np.arange(n)])
    cols = np.concatenate([v, u, np.arange(n)])
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    if dense:
        _check_dense(n)
        return mat.toarray()
    return mat


def jaccard_prune(g: Graph, threshold: float) -> Graph:
    """Remove edges whose binarized-feature Jaccard similarity is below
    ``threshold``.

    Features are binarized as ``x > 0``. The similarity of two empty
    supports is defined as 1. Node set, features and labels are unchanged.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    if g.num_edges == 0:
        return g.replace_edges(g.edges)
    binary = g.features > 0
    bu = binary[g.edges[:, 0]]
    bv = binary[g.edges[:, 1]]
    inter = (bu & bv).sum(axis=1).astype(np.float64)
    union = (bu | bv).sum(axis=1).astype(np.float64)
    sim = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return g.replace_edges(g.edges[sim >= threshold])


def synthetic_sbm(
    seed: int,
    sizes: tuple[int, ...],
    p_in: float,
    p_out: float,
    feature_dim: int,
) -> Graph:
    """Stochastic block model graph with block labels and noisy block features.

    Deterministic for a fixed seed. Each node's feature vector carries a unit
    signal on the coordinate ``block % feature_dim`` plus Gaussian noise, so
    classes are learnable but not trivially separable from features alone.
    """
    sizes = tuple(int(s) for s in sizes)
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError("every block must have at least one node")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    if feature_dim < 1:
        raise ValueError("feature_dim must be positive")

    n = sum(sizes)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    rng = np.random.default_rng(seed)

    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    draw = rng.random((n, n))
    upper = np.triu(draw < prob, k=1)
    edges = np.argwhere(upper)

    features = rng.normal(0.0, 0.3, size=(n, feature_dim))
    features[np.arange(n), labels % feature_dim] += 1.0

    return Graph(features, labels, edges, num_classes=max(2, len(sizes)))


def random_split(
    g: Graph,
    seed: int,
    ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
) -> Split:
    """Seeded train/valid/test split with floor-sized train/valid sets.

    Train and valid sizes are ``floor(N * ratio)``; the test set takes the
    remainder. Deterministic for a fixed seed.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive numbers")
    if abs(sum(ratios) - 1.0) > 1e-6:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = g.num_nodes
    n_train = int(np.floor(n * ratios[0]))
    n_valid = int(np.floor(n * ratios[1]))
    n_test = n - n_train - n_valid
    if min(n_train, n_valid, n_test) < 1:
        raise ValueError(
            f"{n} nodes are too few for ratios {ratios}: "
            f"sizes would be {n_train}/{n_valid}/{n_test}"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return Split(
        train=perm[:n_train],
        valid=perm[n_train:n_train + n_valid],
        test=perm[n_train + n_valid:],
    )
