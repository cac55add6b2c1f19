"""The benchmark loop: split, select, train, attack, score, aggregate.

For each of K random splits the victim configuration is selected once on
clean data; for each of R runs per split a victim and a gray-box surrogate
are trained, 50 structurally diverse targets are picked, and every
(attack, target) pair is attacked once at the largest budget. Smaller
budgets reuse plan prefixes. Each perturbed graph is scored in the evasion
setting (frozen victim, perturbed structure) and the poisoning setting
(fresh retraining on the perturbed graph with the selected configuration).

Every stage seeds its RNG from ``derive_seed(master_seed, stage, ...)`` so
any cell is independently replayable and the report is a pure function of
(RunSpec, Graph) regardless of worker scheduling.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from ._validation import check_graph, check_split
from .attacks import AttackContext, NoLegalMoveError, apply_plan, get_attack
from .graph import DEFAULT_SPLIT_RATIOS, Graph, jaccard_prune, random_split
from .models import ModelConfig, TrainedModel, TrainingDivergedError, train
from .selection import CATEGORIES, ConfigGrid, TargetSet, node_select, select

log = logging.getLogger("edgeflip")

SETTINGS = ("evasion", "poison")


class BenchmarkError(RuntimeError):
    """Raised when a benchmark run cannot produce a usable report."""


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit seed derived from the master seed and a stage path."""
    text = "|".join([str(master_seed), *map(str, parts)])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") & (2**63 - 1)


@dataclass(frozen=True)
class RunSpec:
    """Everything that defines one benchmark run."""

    victim_grid: ConfigGrid
    surrogate_grid: ConfigGrid
    num_splits: int = 5
    runs_per_split: int = 3
    budgets: tuple[int, ...] = (1,)
    attacks: tuple[str, ...] = ("rnd",)
    master_seed: int = 0
    sample_ratio: float = 0.1
    split_ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS
    jaccard_threshold: float | None = None
    settings: tuple[str, ...] = SETTINGS
    max_dropped_fraction: float = 0.01

    def __post_init__(self):
        if self.num_splits < 1 or self.runs_per_split < 1:
            raise ValueError("num_splits and runs_per_split must be >= 1")
        budgets = tuple(int(b) for b in self.budgets)
        if not budgets or any(b < 1 for b in budgets):
            raise ValueError("budgets must be a non-empty list of positive ints")
        object.__setattr__(self, "budgets", budgets)
        attacks = tuple(self.attacks)
        for name in attacks:
            get_attack(name)
        if not attacks:
            raise ValueError("attacks must be non-empty")
        object.__setattr__(self, "attacks", attacks)
        settings = tuple(self.settings)
        if not settings or any(s not in SETTINGS for s in settings):
            raise ValueError(f"settings must be a non-empty subset of {SETTINGS}")
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "split_ratios",
                           tuple(float(r) for r in self.split_ratios))
        if self.jaccard_threshold is not None \
                and not 0.0 <= self.jaccard_threshold <= 1.0:
            raise ValueError("jaccard_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class CellRecord:
    """One (attack, budget, split, run, target, setting) outcome."""

    attack: str
    budget: int
    split: int
    run: int
    target: int
    setting: str
    success: bool | None
    categories: tuple[str, ...]
    plan_size: int = 0
    early_stop: bool = False
    error: str | None = None


@dataclass(frozen=True)
class EvalReport:
    """All per-cell outcomes plus enough metadata to aggregate them."""

    cells: tuple[CellRecord, ...]
    num_splits: int
    runs_per_split: int
    targets_per_run: dict
    overlapped_targets: bool

    @property
    def dropped_cells(self) -> int:
        return sum(1 for c in self.cells if c.error is not None)

    def success_rate(self, attack: str, budget: int, setting: str):
        """(mean, std) where std is over the per-(split, run) rates."""
        valid = [c for c in self.cells
                 if c.attack == attack and c.budget == budget
                 and c.setting == setting and c.error is None]
        if not valid:
            return float("nan"), float("nan")
        mean = sum(c.success for c in valid) / len(valid)
        rates = []
        for (i, r) in sorted({(c.split, c.run) for c in valid}):
            group = [c.success for c in valid if (c.split, c.run) == (i, r)]
            rates.append(sum(group) / len(group))
        return float(mean), float(np.std(rates))

    def summary(self) -> dict:
        return aggregate(self.cells)


def aggregate(cells) -> dict:
    """Summary tables: mean/std per (attack, budget, setting) plus the
    per-target-category breakdown. Cells with errors are excluded and
    counted as dropped."""
    cells = list(cells)
    overall = []
    combos = sorted({(c.attack, c.budget, c.setting) for c in cells})
    for attack, budget, setting in combos:
        matching = [c for c in cells if (c.attack, c.budget, c.setting)
                    == (attack, budget, setting)]
        valid = [c for c in matching if c.error is None]
        dropped = len(matching) - len(valid)
        if valid:
            mean = sum(c.success for c in valid) / len(valid)
            rates = []
            for (i, r) in sorted({(c.split, c.run) for c in valid}):
                group = [c.success for c in valid if (c.split, c.run) == (i, r)]
                rates.append(sum(group) / len(group))
            std = float(np.std(rates))
        else:
            mean, std = float("nan"), float("nan")
        overall.append({
            "attack": attack, "budget": budget, "setting": setting,
            "mean": float(mean), "std": std,
            "cells": len(valid), "successes": int(sum(c.success for c in valid)),
            "dropped": dropped,
        })

    by_category = []
    for attack, budget, setting in combos:
        for category in CATEGORIES:
            valid = [c for c in cells
                     if (c.attack, c.budget, c.setting) == (attack, budget, setting)
                     and c.error is None and category in c.categories]
            if not valid:
                continue
            by_category.append({
                "attack": attack, "budget": budget, "setting": setting,
                "category": category,
                "mean": sum(c.success for c in valid) / len(valid),
                "cells": len(valid),
            })
    return {"overall": overall, "by_category": by_category}


def score_evasion(victim: TrainedModel, g_perturbed: Graph, target: int,
                  y: int) -> bool:
    """Attack success under evasion: the clean-trained victim forward-passes
    the perturbed structure and no longer predicts the true label."""
    return int(victim.predict_on(g_perturbed)[target]) != int(y)


def score_poison(config_best: ModelConfig, g_perturbed: Graph, split,
                 target: int, y: int, seed: int) -> bool:
    """Attack success under poisoning: a fresh victim trained on the
    perturbed graph with the selected configuration mispredicts the target."""
    config = dataclasses.replace(config_best, seed=seed)
    model = train(config, g_perturbed, split)
    return int(model.predictions[target]) != int(y)


@dataclass
class _RunState:
    """Per-(split, run) context shipped to cell workers."""

    graph: Graph
    spec: RunSpec
    split_idx: int
    run_idx: int
    split: object
    victim: TrainedModel
    victim_config: ModelConfig
    surrogate: TrainedModel
    targets: TargetSet


_WORKER_STATE: _RunState | None = None


def _init_worker(state: _RunState) -> None:
    global _WORKER_STATE
    _WORKER_STATE = state
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except ImportError:  # pragma: no cover
        pass


def _defended(g: Graph, spec: RunSpec) -> Graph:
    if spec.jaccard_threshold is None:
        return g
    return jaccard_prune(g, spec.jaccard_threshold)


def _run_cell(task) -> list[CellRecord]:
    return _compute_cells(_WORKER_STATE, task)


def _compute_cells(state: _RunState, task) -> list[CellRecord]:
    """All budget/setting cells for one (attack, target) pair."""
    attack_name, target = task
    spec = state.spec
    g = state.graph
    i, r = state.split_idx, state.run_idx
    categories = state.targets.categories_of(target)
    y = int(g.labels[target])
    max_budget = max(spec.budgets)

    def failed(message: str) -> list[CellRecord]:
        return [
            CellRecord(attack_name, budget, i, r, target, setting,
                       success=None, categories=categories, error=message)
            for budget in spec.budgets for setting in spec.settings
        ]

    ctx = AttackContext(
        graph=g,
        surrogate=state.surrogate,
        seed=derive_seed(spec.master_seed, "attack", i, r, attack_name, target),
        sample_ratio=spec.sample_ratio,
    )
    try:
        full_plan = get_attack(attack_name)(ctx, target, max_budget)
    except NoLegalMoveError as exc:
        return failed(f"attack: {exc}")

    cells = []
    for budget in spec.budgets:
        plan = full_plan.prefix(budget)
        perturbed = _defended(apply_plan(g, plan), spec)
        for setting in spec.settings:
            if setting == "evasion":
                flag = score_evasion(state.victim, perturbed, target, y)
                cells.append(CellRecord(
                    attack_name, budget, i, r, target, "evasion", flag,
                    categories, len(plan.flips), plan.early_stop))
            else:
                try:
                    flag = score_poison(
                        state.victim_config, perturbed, state.split, target, y,
                        seed=derive_seed(spec.master_seed, "poison", i, r, target),
                    )
                except TrainingDivergedError as exc:
                    cells.append(CellRecord(
                        attack_name, budget, i, r, target, "poison", None,
                        categories, len(plan.flips), plan.early_stop,
                        error=f"poison: {exc}"))
                else:
                    cells.append(CellRecord(
                        attack_name, budget, i, r, target, "poison", flag,
                        categories, len(plan.flips), plan.early_stop))
    return cells


def _map_tasks(state: _RunState, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [_compute_cells(state, task) for task in tasks]
    import multiprocessing as mp

    try:
        context = mp.get_context("fork")
    except ValueError:  # pragma: no cover
        return [_compute_cells(state, task) for task in tasks]
    with context.Pool(threads, initializer=_init_worker,
                      initargs=(state,)) as pool:
        return pool.map(_run_cell, tasks, chunksize=1)


def run_benchmark(spec: RunSpec, g: Graph, threads: int = 1) -> EvalReport:
    """Execute the full evaluation loop and return the per-cell report.

    Deterministic for a fixed (spec, graph) whatever ``threads`` is; raises
    :class:`BenchmarkError` if every cell failed or the dropped-cell count
    exceeds ``spec.max_dropped_fraction``.
    """
    check_graph(g)
    clean_defended = _defended(g, spec)
    ms = spec.master_seed
    all_cells: list[CellRecord] = []
    targets_per_run: dict = {}
    overlapped = False

    for i in range(spec.num_splits):
        split = random_split(g, derive_seed(ms, "split", i), spec.split_ratios)
        check_split(g, split)
        victim_config, _ = select(spec.victim_grid, clean_defended, split)
        surrogate_config, _ = select(spec.surrogate_grid, g, split)
        log.info("split %d: victim %s / surrogate %s", i,
                 victim_config.arch, surrogate_config.arch)
        for r in range(spec.runs_per_split):
            victim = train(
                dataclasses.replace(victim_config,
                                    seed=derive_seed(ms, "victim", i, r)),
                clean_defended, split)
            surrogate = train(
                dataclasses.replace(surrogate_config,
                                    seed=derive_seed(ms, "surrogate", i, r)),
                g, split)
            targets = node_select(victim, clean_defended, split,
                                  derive_seed(ms, "targets", i, r))
            targets_per_run[(i, r)] = targets.num_unique
            overlapped = overlapped or targets.overlapped
            state = _RunState(g, spec, i, r, split, victim, victim_config,
                              surrogate, targets)
            tasks = [(name, v) for name in spec.attacks
                     for v in targets.all_targets]
            for cell_list in _map_tasks(state, tasks, threads):
                all_cells.extend(cell_list)
            log.info("split %d run %d: %d cells", i, r, len(tasks))

    report = EvalReport(
        cells=tuple(all_cells),
        num_splits=spec.num_splits,
        runs_per_split=spec.runs_per_split,
        targets_per_run=targets_per_run,
        overlapped_targets=overlapped,
    )
    total = len(report.cells)
    if total == 0 or report.dropped_cells == total:
        raise BenchmarkError("no cell produced a result")
    if report.dropped_cells > spec.max_dropped_fraction * total:
        raise BenchmarkError(
            f"{report.dropped_cells} of {total} cells failed, "
            f"above the {spec.max_dropped_fraction:.0%} cap")
    return report
