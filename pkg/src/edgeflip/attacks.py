"""Targeted edge-flip attacks under a budget.

All four attacks perturb only edges incident to the target node and share
one budget-accounting plan type: a flip that undoes an earlier flip still
consumes budget. Plans are pure functions of (graph, surrogate, target,
budget, seed), which makes budget-prefix sharing valid: the first ``k``
flips of a larger-budget plan are exactly the budget-``k`` plan.

* ``rnd`` -- uniform random legal flips.
* ``l1d-rnd`` -- random add/remove choice; adds attach the target to the
  highest-degree node of a sampled candidate set, removes cut the edge to
  the sampled original neighbor with the largest feature-mass influence
  score.
* ``fga`` -- greedy first-order steps on the surrogate's adjacency gradient.
* ``nettack-lite`` -- greedy exact search: every step evaluates the
  surrogate margin of the target under every legal flip and applies the
  minimizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph, normalize_adjacency
from .models import ARCH_SGC, TrainedModel, loss_and_grads, margin

ADD = "add"
REMOVE = "remove"


class NoLegalMoveError(RuntimeError):
    """Raised when an attack cannot place the requested number of flips."""


def flip(u: int, v: int, action: str) -> tuple[int, int, str]:
    """Canonical flip tuple with the pair ordered ascending."""
    if u == v:
        raise ValueError("flips cannot touch a self-pair")
    if action not in (ADD, REMOVE):
        raise ValueError(f"unknown action {action!r}")
    return (min(u, v), max(u, v), action)


@dataclass(frozen=True)
class AttackPlan:
    """Ordered edge flips for one target under a budget.

    Invariants: at most ``budget`` flips, every flip touches the target, no
    flip is repeated, and at application time an add requires the edge to be
    absent and a remove requires it to be present.
    """

    target: int
    flips: tuple[tuple[int, int, str], ...]
    budget: int
    early_stop: bool = False

    def __post_init__(self):
        flips = tuple(flip(u, v, action) for u, v, action in self.flips)
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if len(flips) > self.budget:
            raise ValueError(f"{len(flips)} flips exceed budget {self.budget}")
        if len(set(flips)) != len(flips):
            raise ValueError("plan repeats a flip")
        for u, v, _ in flips:
            if self.target not in (u, v):
                raise ValueError(f"flip ({u}, {v}) does not touch target {self.target}")
        object.__setattr__(self, "flips", flips)

    def prefix(self, budget: int) -> "AttackPlan":
        """The plan truncated to a smaller budget (prefix sharing)."""
        kept = self.flips[:budget]
        return AttackPlan(self.target, kept, budget, early_stop=len(kept) < budget)

    def to_json(self) -> str:
        return json.dumps({
            "target": self.target,
            "flips": [list(f) for f in self.flips],
            "budget": self.budget,
            "early_stop": self.early_stop,
        })

    @classmethod
    def from_json(cls, line: str) -> "AttackPlan":
        obj = json.loads(line)
        return cls(
            target=obj["target"],
            flips=tuple((f[0], f[1], f[2]) for f in obj["flips"]),
            budget=obj["budget"],
            early_stop=obj.get("early_stop", False),
        )


def write_plans(plans, path) -> None:
    """Serialize plans as JSON lines for audit and replay."""
    with open(path, "w", encoding="utf-8") as fh:
        for plan in plans:
            fh.write(plan.to_json() + "\n")


def read_plans(path) -> list[AttackPlan]:
    with open(path, "r", encoding="utf-8") as fh:
        return [AttackPlan.from_json(line) for line in fh if line.strip()]


@dataclass(frozen=True)
class AttackContext:
    """Shared attacker state: the clean graph, a gray-box surrogate trained
    on the same split as the victim, and the RNG seed."""

    graph: Graph
    surrogate: TrainedModel
    seed: int
    sample_ratio: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.sample_ratio <= 1.0:
            raise ValueError("sample_ratio must lie in (0, 1]")


class _Workspace:
    """Mutable adjacency-set view of a graph during an attack."""

    def __init__(self, g: Graph):
        self.n = g.num_nodes
        self.adj: list[set[int]] = [set() for _ in range(self.n)]
        for u, v in g.edges:
            self.adj[u].add(int(v))
            self.adj[v].add(int(u))
        self.base = g

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adj[u]

    def apply(self, f: tuple[int, int, str]) -> None:
        u, v, action = f
        if action == ADD:
            self.adj[u].add(v)
            self.adj[v].add(u)
        else:
            self.adj[u].discard(v)
            self.adj[v].discard(u)

    def degrees(self) -> np.ndarray:
        return np.array([len(s) for s in self.adj], dtype=np.int64)

    def edges_array(self) -> np.ndarray:
        pairs = [(u, v) for u in range(self.n) for v in self.adj[u] if u < v]
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)

    def csr(self) -> sp.csr_matrix:
        edges = self.edges_array()
        u, v = edges[:, 0], edges[:, 1]
        data = np.ones(2 * len(u))
        return sp.csr_matrix(
            (data, (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(self.n, self.n),
        )

    def to_graph(self) -> Graph:
        return self.base.replace_edges(self.edges_array())


def apply_plan(g: Graph, plan: AttackPlan) -> Graph:
    """Apply the flips in order and return the perturbed copy.

    The original graph is untouched; features and labels are shared. Raises
    ``ValueError`` if a flip's add/remove precondition fails at its turn.
    """
    ws = _Workspace(g)
    for f in plan.flips:
        u, v, action = f
        if not (0 <= u < g.num_nodes and 0 <= v < g.num_nodes):
            raise ValueError(f"flip ({u}, {v}) references a missing node")
        present = ws.has_edge(u, v)
        if action == ADD and present:
            raise ValueError(f"cannot add existing edge ({u}, {v})")
        if action == REMOVE and not present:
            raise ValueError(f"cannot remove missing edge ({u}, {v})")
        ws.apply(f)
    return ws.to_graph()


def influence_score(g: Graph, u: int) -> float:
    """Total absolute feature mass of ``u``'s closed neighborhood."""
    if not 0 <= u < g.num_nodes:
        raise IndexError(f"node id {u} out of range [0, {g.num_nodes})")
    mass = np.abs(g.features).sum(axis=1)
    return float(mass[u] + mass[g.neighbors(u)].sum())


def attack_rnd(ctx: AttackContext, target: int, budget: int) -> AttackPlan:
    """Uniform random legal target-incident flips (exact repeats excluded)."""
    rng = np.random.default_rng(ctx.seed)
    ws = _Workspace(ctx.graph)
    flips: list[tuple[int, int, str]] = []
    used = set()
    for _ in range(budget):
        nbrs = sorted(ws.adj[target])
        non_nbrs = [u for u in range(ws.n) if u != target and u not in ws.adj[target]]
        moves = [(u, ADD) for u in non_nbrs] + [(u, REMOVE) for u in nbrs]
        moves = [m for m in moves if flip(target, *m) not in used]
        if not moves:
            raise NoLegalMoveError(f"no legal flip left for target {target}")
        u, action = moves[int(rng.integers(len(moves)))]
        f = flip(target, u, action)
        ws.apply(f)
        flips.append(f)
        used.add(f)
    return AttackPlan(target, tuple(flips), budget)


def _sample_size(ratio: float, n: int) -> int:
    """``floor(ratio * n)`` promoted to at least one when candidates exist."""
    return max(1, int(np.floor(ratio * n))) if n > 0 else 0


def attack_l1d_rnd(ctx: AttackContext, target: int, budget: int) -> AttackPlan:
    """Degree-and-feature-guided random baseline.

    Each round flips a coin between adding and removing. Adds sample a
    fraction of the non-neighbors and connect the target to the sampled node
    with the highest current degree; removes sample from the original
    neighbors (edges added by this attack are never removed) and cut the
    edge to the sampled neighbor with the highest influence score. A round
    whose branch has no candidates falls through to the other branch.
    """
    rng = np.random.default_rng(ctx.seed)
    ws = _Workspace(ctx.graph)
    mass = np.abs(ctx.graph.features).sum(axis=1)
    added: set[int] = set()
    flips = []

    def try_add():
        candidates = np.array(
            [u for u in range(ws.n) if u != target and u not in ws.adj[target]],
            dtype=np.int64,
        )
        if candidates.size == 0:
            return None
        k = _sample_size(ctx.sample_ratio, candidates.size)
        sample = np.sort(rng.choice(candidates, size=k, replace=False))
        degs = ws.degrees()[sample]
        return int(sample[int(np.argmax(degs))]), ADD

    def try_remove():
        candidates = np.array(sorted(ws.adj[target] - added), dtype=np.int64)
        if candidates.size == 0:
            return None
        k = _sample_size(ctx.sample_ratio, candidates.size)
        sample = np.sort(rng.choice(candidates, size=k, replace=False))
        scores = np.array([mass[u] + sum(mass[w] for w in ws.adj[u]) for u in sample])
        return int(sample[int(np.argmax(scores))]), REMOVE

    for _ in range(budget):
        first, second = (try_add, try_remove) if rng.random() > 0.5 \
            else (try_remove, try_add)
        move = first() or second()
        if move is None:
            raise NoLegalMoveError(f"no legal flip left for target {target}")
        u, action = move
        f = flip(target, u, action)
        ws.apply(f)
        flips.append(f)
        if action == ADD:
            added.add(u)
    return AttackPlan(target, tuple(flips), budget)


def _sgc_target_grad_row(surrogate: TrainedModel, g: Graph, target: int,
                         b: np.ndarray) -> np.ndarray:
    """Row ``target`` of the adjacency pair-gradient for an SGC surrogate.

    The cross-entropy at a single node makes ``dL/dS`` a sum of ``hops``
    rank-one terms, so the full gradient row costs a handful of sparse
    matvecs instead of dense N x N algebra. Equals the corresponding row of
    ``loss_and_grads``'s adjacency gradient.
    """
    s = normalize_adjacency(g)
    k = surrogate.config.hops
    n = g.num_nodes
    y = int(g.labels[target])

    unit = np.zeros(n)
    unit[target] = 1.0
    ps = [unit]
    for _ in range(k):
        ps.append(s @ ps[-1])
    z_row = ps[k] @ b
    shifted = np.exp(z_row - z_row.max())
    grow = shifted / shifted.sum()
    grow[y] -= 1.0

    qs = [b @ grow]
    for _ in range(k):
        qs.append(s @ qs[-1])

    d = g.degrees().astype(np.float64)
    t_vec = 1.0 / np.sqrt(1.0 + d)
    row_p = np.zeros(n)
    col_p = np.zeros(n)
    rowsum = np.zeros(n)
    for i in range(k):
        p_i, q_i = ps[i], qs[k - 1 - i]
        row_p += p_i[target] * q_i
        col_p += q_i[target] * p_i
        rowsum += p_i * (s @ q_i) + q_i * (s @ p_i)
    pair = t_vec[target] * t_vec * (row_p + col_p) \
        - rowsum[target] / (2.0 * (1.0 + d[target])) \
        - rowsum / (2.0 * (1.0 + d))
    pair[target] = 0.0
    return pair


def attack_fga(ctx: AttackContext, target: int, budget: int) -> AttackPlan:
    """Greedy first-order attack on the surrogate's adjacency gradient.

    Each step recomputes the gradient of the surrogate's cross-entropy at
    the target (with its true label) on the current perturbed graph and
    applies the target-incident flip with the largest gradient-aligned loss
    increase: add where the gradient is positive and the edge absent, remove
    where it is negative and the edge present. Stops early when no
    admissible entry has a positive score.
    """
    work = ctx.graph
    fast_sgc = ctx.surrogate.config.arch == ARCH_SGC
    b = ctx.graph.features @ ctx.surrogate.weights[0] if fast_sgc else None
    flips = []
    early_stop = False
    for _ in range(budget):
        if fast_sgc:
            row = _sgc_target_grad_row(ctx.surrogate, work, target, b)
        else:
            _, _, adj_grad = loss_and_grads(ctx.surrogate, work, [target])
            row = adj_grad[target]
        present = np.zeros(work.num_nodes, dtype=bool)
        present[work.neighbors(target)] = True
        score = np.where(present, -row, row)
        score[target] = -np.inf
        for u, v, action in flips:
            other = v if u == target else u
            # A re-flip of the same pair in the same direction is a repeat.
            if (action == ADD) == (not present[other]):
                score[other] = -np.inf
        best = int(np.argmax(score))
        if not score[best] > 0:
            early_stop = True
            break
        f = flip(target, best, REMOVE if present[best] else ADD)
        flips.append(f)
        work = apply_plan(work, AttackPlan(target, (f,), 1))
    return AttackPlan(target, tuple(flips), budget, early_stop=early_stop)


class _SgcMarginScorer:
    """Exact surrogate margins of the target under every legal single flip.

    For the two-hop linear surrogate the logits row of the target after a
    flip touching (target, u) can be rebuilt from per-step aggregates in
    O(C) per candidate, because only rows/columns ``target`` and ``u`` of
    the normalized adjacency change. Margins computed here equal a full
    recomputation of ``A_hat^2 X W`` up to floating-point ordering.
    """

    def __init__(self, ws: _Workspace, b: np.ndarray, target: int):
        self.ws = ws
        self.b = b
        self.t_idx = target

    def _state(self):
        ws, t_idx = self.ws, self.t_idx
        d = ws.degrees().astype(np.float64)
        t = 1.0 / np.sqrt(1.0 + d)
        a_csr = ws.csr()
        u_mat = t[:, None] * self.b
        v_mat = u_mat + a_csr @ u_mat  # (A + I) U
        nbr = np.array(sorted(ws.adj[t_idx]), dtype=np.int64)
        return d, t, a_csr, v_mat, nbr

    def current_margin(self, y: int) -> float:
        d, t, _, v_mat, nbr = self._state()
        m1 = t[:, None] * v_mat  # S B
        srow = np.zeros(self.ws.n)
        srow[nbr] = t[self.t_idx] * t[nbr]
        srow[self.t_idx] = t[self.t_idx] ** 2
        return margin(srow @ m1, y)

    def candidate_margins(self, y: int):
        """(add_ids, add_margins, rem_ids, rem_margins) for the current state."""
        d, t, a_csr, v_mat, nbr = self._state()
        t_idx, b = self.t_idx, self.b
        alpha = t[t_idx]
        bt = b[t_idx]
        vt = v_mat[t_idx]

        if len(nbr):
            tn2 = t[nbr] ** 2
            c0 = (tn2[:, None] * v_mat[nbr]).sum(axis=0)
            c1 = float(tn2.sum())
            w_all = np.asarray(a_csr[nbr].T @ tn2).ravel()
        else:
            c0 = np.zeros(b.shape[1])
            c1 = 0.0
            w_all = np.zeros(self.ws.n)

        def margins_of(z_rows):
            true = z_rows[:, y]
            others = z_rows.copy()
            others[:, y] = -np.inf
            return true - others.max(axis=1)

        mask = np.ones(self.ws.n, dtype=bool)
        mask[t_idx] = False
        mask[nbr] = False
        add_ids = np.flatnonzero(mask)
        if add_ids.size:
            a = 1.0 / np.sqrt(2.0 + d[t_idx])
            bu = 1.0 / np.sqrt(2.0 + d[add_ids])
            beta = t[add_ids]
            b_rows = b[add_ids]
            pt = vt[None, :] + (a - alpha) * bt[None, :] + bu[:, None] * b_rows
            pu = v_mat[add_ids] + (bu - beta)[:, None] * b_rows + a * bt[None, :]
            tnbr = (c0 + c1 * (a - alpha) * bt)[None, :] \
                + ((bu - beta) * w_all[add_ids])[:, None] * b_rows
            z_add = a ** 3 * pt + a * bu[:, None] ** 2 * pu + a * tnbr
            add_margins = margins_of(z_add)
        else:
            add_margins = np.zeros(0)

        rem_ids = nbr
        if rem_ids.size:
            a = 1.0 / np.sqrt(d[t_idx])
            bu = 1.0 / np.sqrt(d[rem_ids])
            beta = t[rem_ids]
            b_rows = b[rem_ids]
            tu2 = beta ** 2
            pt = vt[None, :] + (a - alpha) * bt[None, :] - beta[:, None] * b_rows
            tnbr = (c0[None, :] - tu2[:, None] * v_mat[rem_ids]) \
                + ((c1 - tu2) * (a - alpha))[:, None] * bt[None, :] \
                + ((bu - beta) * w_all[rem_ids])[:, None] * b_rows
            z_rem = a ** 3 * pt + a * tnbr
            rem_margins = margins_of(z_rem)
        else:
            rem_margins = np.zeros(0)

        return add_ids, add_margins, rem_ids, rem_margins


def attack_nettack_lite(ctx: AttackContext, target: int, budget: int) -> AttackPlan:
    """Greedy exact margin-minimizing attack on the linear surrogate.

    Each step evaluates the surrogate margin of the target after every legal
    target-incident flip and applies the minimizer; ties prefer removals,
    then the lower node id. Stops early if no flip can avoid increasing the
    margin, so the margin sequence is non-increasing.
    """
    cfg = ctx.surrogate.config
    if cfg.arch != ARCH_SGC:
        raise ValueError("nettack-lite requires an SGC surrogate")
    if cfg.hops != 2:
        raise ValueError("nettack-lite supports only the two-hop surrogate")

    ws = _Workspace(ctx.graph)
    b = ctx.graph.features @ ctx.surrogate.weights[0]
    scorer = _SgcMarginScorer(ws, b, target)
    y = int(ctx.graph.labels[target])
    flips = []
    early_stop = False

    used = set()
    for _ in range(budget):
        add_ids, add_m, rem_ids, rem_m = scorer.candidate_margins(y)
        keep_add = [i for i, u in enumerate(add_ids)
                    if flip(target, int(u), ADD) not in used]
        keep_rem = [i for i, u in enumerate(rem_ids)
                    if flip(target, int(u), REMOVE) not in used]
        add_ids, add_m = add_ids[keep_add], add_m[keep_add]
        rem_ids, rem_m = rem_ids[keep_rem], rem_m[keep_rem]
        if add_ids.size == 0 and rem_ids.size == 0:
            raise NoLegalMoveError(f"no legal flip left for target {target}")
        best_add = int(np.argmin(add_m)) if add_ids.size else None
        best_rem = int(np.argmin(rem_m)) if rem_ids.size else None
        if best_rem is not None and (
            best_add is None or rem_m[best_rem] <= add_m[best_add]
        ):
            chosen, chosen_margin = (int(rem_ids[best_rem]), REMOVE), rem_m[best_rem]
        else:
            chosen, chosen_margin = (int(add_ids[best_add]), ADD), add_m[best_add]
        if chosen_margin > scorer.current_margin(y):
            early_stop = True
            break
        f = flip(target, chosen[0], chosen[1])
        ws.apply(f)
        flips.append(f)
        used.add(f)
    return AttackPlan(target, tuple(flips), budget, early_stop=early_stop)


ATTACKS = {
    "rnd": attack_rnd,
    "l1d-rnd": attack_l1d_rnd,
    "fga": attack_fga,
    "nettack-lite": attack_nettack_lite,
}


def get_attack(name: str):
    try:
        return ATTACKS[name]
    except KeyError:
        raise KeyError(
            f"unknown attack {name!r}; valid names: {', '.join(sorted(ATTACKS))}"
        ) from None
