#!/usr/bin/env python3
"""Convert a public Cora distribution into the loader's CSV layout.

Two source formats are supported:

* ``--npz cora.npz`` -- the sparse-matrix bundle used throughout the graph
  adversarial-robustness literature (keys ``adj_*``, ``attr_*``,
  ``labels``); this is the variant with 2708 nodes and 5069 undirected
  edges.
* ``--content cora.content --cites cora.cites`` -- the original LINQS
  release (tab-separated feature lines plus a citation list).

Output: ``features.csv.gz``, ``edges.csv``, ``labels.csv`` in ``--out``.

Usage:
    python scripts/prepare_cora.py --npz /path/to/cora.npz --out data/cora
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from edgeflip.graph import Graph, write_graph  # noqa: E402


def from_npz(path: Path) -> Graph:
    data = np.load(path, allow_pickle=True)
    adj = sp.csr_matrix(
        (data["adj_data"], data["adj_indices"], data["adj_indptr"]),
        shape=tuple(data["adj_shape"]))
    attr = sp.csr_matrix(
        (data["attr_data"], data["attr_indices"], data["attr_indptr"]),
        shape=tuple(data["attr_shape"]))
    labels = np.asarray(data["labels"], dtype=np.int64)
    adj = adj + adj.T
    adj.data[:] = 1.0
    adj.setdiag(0)
    adj.eliminate_zeros()
    coo = sp.triu(adj, k=1).tocoo()
    edges = np.column_stack([coo.row, coo.col])
    features = np.asarray(attr.todense(), dtype=np.float64)
    return Graph(features, labels, edges, int(labels.max()) + 1)


def from_linqs(content: Path, cites: Path) -> Graph:
    ids, rows, names = [], [], []
    for line in content.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        ids.append(parts[0])
        rows.append([float(x) for x in parts[1:-1]])
        names.append(parts[-1])
    index = {paper: i for i, paper in enumerate(ids)}
    classes = {name: i for i, name in enumerate(sorted(set(names)))}
    labels = np.array([classes[n] for n in names], dtype=np.int64)
    features = np.array(rows, dtype=np.float64)
    edges = set()
    for line in cites.read_text().splitlines():
        parts = line.split()
        if len(parts) != 2 or parts[0] not in index or parts[1] not in index:
            continue
        u, v = index[parts[0]], index[parts[1]]
        if u != v:
            edges.add((min(u, v), max(u, v)))
    return Graph(features, labels, np.array(sorted(edges)), len(classes))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--npz", type=Path, help="cora.npz sparse bundle")
    parser.add_argument("--content", type=Path, help="LINQS cora.content")
    parser.add_argument("--cites", type=Path, help="LINQS cora.cites")
    parser.add_argument("--out", type=Path, default=Path("data/cora"))
    args = parser.parse_args()

    if args.npz:
        g = from_npz(args.npz)
    elif args.content and args.cites:
        g = from_linqs(args.content, args.cites)
    else:
        parser.error("give --npz, or both --content and --cites")

    args.out.mkdir(parents=True, exist_ok=True)
    write_graph(g, args.out / "features.csv.gz", args.out / "edges.csv",
                args.out / "labels.csv")
    print(f"wrote {args.out}: {g.num_nodes} nodes, {g.num_edges} edges, "
          f"{g.num_features} features, {g.num_classes} classes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
