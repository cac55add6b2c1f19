"""Hyper-parameter selection and target-node selection.

``select`` picks the configuration with the best validation accuracy; it
reads only the train and valid index sets of the split, never the test set.
``node_select`` draws 50 structurally diverse target nodes from the
correctly classified test pool: ten each by highest/lowest degree,
highest/lowest positive margin, and a seeded uniform draw.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .models import (
    ARCH_GCN2,
    ARCH_SGC,
    ModelConfig,
    TrainedModel,
    TrainingDivergedError,
    margin,
    train,
)

NODES_PER_CATEGORY = 10
CATEGORIES = ("high_degree", "low_degree", "high_margin", "low_margin", "random")

# Below this many correctly classified test nodes the categories may overlap.
_EXCLUSIVE_POOL_SIZE = len(CATEGORIES) * NODES_PER_CATEGORY


class SelectionError(RuntimeError):
    """Raised when model or target selection cannot produce a result."""


@dataclass(frozen=True)
class ConfigGrid:
    """Ordered set of candidate configurations (order breaks score ties)."""

    configs: tuple[ModelConfig, ...]

    def __post_init__(self):
        configs = tuple(self.configs)
        if not configs:
            raise ValueError("config grid is empty")
        if len(set(configs)) != len(configs):
            raise ValueError("config grid contains duplicates")
        object.__setattr__(self, "configs", configs)

    def __iter__(self):
        return iter(self.configs)

    def __len__(self):
        return len(self.configs)

    @classmethod
    def from_axes(cls, arch=ARCH_GCN2, **axes) -> "ConfigGrid":
        """Cartesian product over per-field value lists.

        Scalar values are treated as single-element axes, e.g.
        ``ConfigGrid.from_axes(hidden=[32, 64], learning_rate=[0.01], patience=50)``.
        """
        names = list(axes)
        lists = [v if isinstance(v, (list, tuple)) else [v] for v in axes.values()]
        configs = [
            ModelConfig(arch=arch, **dict(zip(names, combo)))
            for combo in itertools.product(*lists)
        ]
        return cls(tuple(configs))


def default_victim_grid(seed: int = 0) -> ConfigGrid:
    """Reduced GCN grid: 2 hidden sizes x 2 learning rates."""
    return ConfigGrid.from_axes(
        arch=ARCH_GCN2,
        hidden=[32, 64],
        learning_rate=[0.01, 0.001],
        dropout=[0.5],
        weight_decay=[5e-4],
        patience=50,
        max_epochs=1000,
        seed=seed,
    )


def default_surrogate_grid(seed: int = 0) -> ConfigGrid:
    """Reduced SGC grid for the gray-box attacker."""
    return ConfigGrid.from_axes(
        arch=ARCH_SGC,
        learning_rate=[0.01, 0.001],
        weight_decay=[5e-4],
        hops=2,
        patience=50,
        max_epochs=1000,
        seed=seed,
    )


@dataclass(frozen=True)
class ConfigScore:
    config: ModelConfig
    val_accuracy: float | None
    error: str | None = None


def select(grid: ConfigGrid, g: Graph, split) -> tuple[ModelConfig, list[ConfigScore]]:
    """Train every configuration and return the validation-accuracy argmax.

    Ties keep the earliest grid entry. Configurations whose training fails
    are recorded in the score table and excluded from the argmax; if all
    fail, a :class:`SelectionError` is raised.
    """
    valid_idx = np.asarray(split.valid, dtype=np.int64)
    scores: list[ConfigScore] = []
    best: ModelConfig | None = None
    best_acc = -np.inf
    for config in grid:
        try:
            model = train(config, g, split)
        except TrainingDivergedError as exc:
            scores.append(ConfigScore(config, None, str(exc)))
            continue
        acc = float((model.predictions[valid_idx] == g.labels[valid_idx]).mean())
        scores.append(ConfigScore(config, acc))
        if acc > best_acc:
            best_acc = acc
            best = config
    if best is None:
        raise SelectionError("every configuration in the grid failed to train")
    return best, scores


@dataclass(frozen=True)
class TargetSet:
    """Fifty target slots in five structural categories.

    When the correctly classified pool is large enough the categories are
    pairwise disjoint; on small pools they may overlap (``overlapped`` is
    then set and ``num_unique`` reports the distinct node count).
    """

    high_degree: tuple[int, ...]
    low_degree: tuple[int, ...]
    high_margin: tuple[int, ...]
    low_margin: tuple[int, ...]
    random: tuple[int, ...]
    overlapped: bool = False

    def by_category(self) -> dict[str, tuple[int, ...]]:
        return {name: getattr(self, name) for name in CATEGORIES}

    @property
    def all_targets(self) -> tuple[int, ...]:
        seen = set()
        for name in CATEGORIES:
            seen.update(getattr(self, name))
        return tuple(sorted(seen))

    @property
    def num_unique(self) -> int:
        return len(self.all_targets)

    def categories_of(self, v: int) -> tuple[str, ...]:
        return tuple(name for name in CATEGORIES if v in getattr(self, name))


def node_select(model: TrainedModel, g: Graph, split, seed: int) -> TargetSet:
    """Pick the 5 x 10 structurally diverse targets for one trained victim.

    All orderings tie-break by ascending node id; the random category is a
    seeded uniform draw from the remaining correct pool.
    """
    test_idx = np.asarray(split.test, dtype=np.int64)
    preds = model.predictions
    correct = [int(v) for v in test_idx if preds[v] == g.labels[v]]
    if len(correct) < NODES_PER_CATEGORY:
        raise SelectionError(
            f"only {len(correct)} correctly classified test nodes, "
            f"need at least {NODES_PER_CATEGORY}"
        )

    deg = {v: g.degree(v) for v in correct}
    marg = {v: margin(model.logits[v], int(g.labels[v])) for v in correct}
    exclusive = len(correct) >= _EXCLUSIVE_POOL_SIZE
    remaining = set(correct)

    def take(key) -> tuple[int, ...]:
        pool = remaining if exclusive else set(correct)
        chosen = tuple(sorted(pool, key=key)[:NODES_PER_CATEGORY])
        if exclusive:
            remaining.difference_update(chosen)
        return chosen

    high_degree = take(lambda v: (-deg[v], v))
    low_degree = take(lambda v: (deg[v], v))
    high_margin = take(lambda v: (-marg[v], v))
    # Smallest positive margin first; zero-margin nodes only as filler.
    low_margin = take(lambda v: (marg[v] <= 0, marg[v], v))

    if exclusive:
        pool = sorted(remaining)
    else:
        picked = set(high_degree + low_degree + high_margin + low_margin)
        pool = sorted(set(correct) - picked)
        if len(pool) < NODES_PER_CATEGORY:
            pool = sorted(correct)
    rng = np.random.default_rng(seed)
    random_pick = tuple(sorted(
        int(v) for v in rng.choice(pool, size=NODES_PER_CATEGORY, replace=False)
    ))

    return TargetSet(
        high_degree=high_degree,
        low_degree=low_degree,
        high_margin=high_margin,
        low_margin=low_margin,
        random=random_pick,
        overlapped=not exclusive,
    )
