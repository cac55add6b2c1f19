"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

from .graph import Graph


def check_graph(g) -> Graph:
    if not isinstance(g, Graph):
        raise TypeError(f"expected a Graph, got {type(g).__name__}")
    return g


def check_split(g: Graph, split) -> None:
    """Validate that all split indices address nodes of ``g``."""
    for name in ("train", "valid", "test"):
        idx = np.asarray(getattr(split, name))
        if idx.size and idx.max() >= g.num_nodes:
            raise ValueError(f"{name} set references node {idx.max()} "
                             f"but the graph has {g.num_nodes} nodes")


def check_node_id(g: Graph, v: int) -> int:
    v = int(v)
    if not 0 <= v < g.num_nodes:
        raise IndexError(f"node id {v} out of range [0, {g.num_nodes})")
    return v
