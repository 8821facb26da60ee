"""Depth-first branch-and-bound with constraint propagation and pluggable
dual bounding.

Five bounding modes are supported: plain propagation with the incumbent
constraint, sub-gradient-optimized decomposition bounds at every node,
network-predicted bounds at every node (with or without sub-gradient
refinement), and a root-only prediction that seeds sub-gradient everywhere
else.  The search itself is identical across modes, so objective values and
node counts are directly comparable.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .encoding import encode_instance
from .errors import Infeasible
from .instances import Automaton, Instance, MkpInstance, PartialAssignment, SspInstance
from .lagrangian import (
    Multipliers,
    SubgradientConfig,
    default_sg_config,
    evaluate_bound,
    optimize_multipliers,
)
from .neural import GnnParams, gnn_forward

__all__ = [
    "BoundingMode",
    "SolveStatus",
    "SolveResult",
    "solve",
    "propagate_knapsack",
    "propagate_regular",
    "prune_test",
]

PRUNE_EPS = 1e-6


class BoundingMode(Enum):
    CP = "cp"
    CP_SG = "cp+sg"
    CP_LEARN_ALL = "cp+learn-all"
    CP_LEARN_ALL_SG = "cp+learn-all+sg"
    CP_LEARN_ROOT_SG = "cp+learn-root+sg"

    @classmethod
    def parse(cls, text: str) -> "BoundingMode":
        for mode in cls:
            if mode.value == text:
                return mode
        raise ValueError(f"unknown mode {text!r}; expected one of "
                         + ", ".join(m.value for m in cls))

    @property
    def uses_model(self) -> bool:
        return self in (BoundingMode.CP_LEARN_ALL, BoundingMode.CP_LEARN_ALL_SG,
                        BoundingMode.CP_LEARN_ROOT_SG)

    @property
    def uses_bounds(self) -> bool:
        return self is not BoundingMode.CP


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    TIMED_OUT = "timed_out"
    INFEASIBLE = "infeasible"


@dataclass
class SolveResult:
    status: SolveStatus
    objective: Optional[int]
    solution: Optional[tuple[int, ...]]
    node_count: int
    wallclock: float
    bound_evaluations: int
    sg_iterations_total: int
    root_bound: Optional[float]

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "solution": list(self.solution) if self.solution is not None else None,
            "node_count": self.node_count,
            "wallclock": self.wallclock,
            "bound_evaluations": self.bound_evaluations,
            "sg_iterations_total": self.sg_iterations_total,
            "root_bound": self.root_bound,
        }


def prune_test(bound: float, incumbent: Optional[int]) -> bool:
    """True when the node cannot contain a solution strictly better than the
    incumbent.  Integral objectives allow rounding the bound down."""
    if incumbent is None:
        return False
    return math.floor(bound + PRUNE_EPS) <= incumbent


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

def _propagate_mkp_state(instance: MkpInstance, state: np.ndarray) -> bool:
    """state: -1 free / 0 out / 1 in; mutated in place.  False on overload."""
    included = state == 1
    residual = instance.capacities - instance.weights @ included
    if (residual < 0).any():
        return False
    free = state == -1
    for k in range(instance.d):
        drop = free & (instance.weights[k] > residual[k])
        if drop.any():
            state[drop] = 0
            free = state == -1
    return True


def propagate_knapsack(instance: MkpInstance, partial: PartialAssignment,
                       domains: Sequence[set[int]]) -> list[set[int]]:
    """Remove value 1 from items too heavy for some residual capacity.

    Failure is reported through an empty domain: when the fixed-in items
    already overload a dimension, the first included item of that dimension
    gets an empty domain.
    """
    state = np.full(instance.n, -1, dtype=np.int8)
    for j, dom in enumerate(domains):
        if dom == {1}:
            state[j] = 1
        elif dom == {0}:
            state[j] = 0
        elif not dom:
            return [set(d) for d in domains]
    for j, v in partial.fixed_items():
        if v not in domains[j]:
            raise ValueError(f"partial fixes item {j} to {v}, outside its domain")
        state[j] = v
    if not _propagate_mkp_state(instance, state):
        out = [set(d) for d in domains]
        included = np.flatnonzero(state == 1)
        overloaded = instance.capacities - instance.weights @ (state == 1) < 0
        k = int(np.argmax(overloaded))
        witness = [j for j in included if instance.weights[k, j] > 0]
        out[witness[0] if witness else int(included[0])] = set()
        return out
    return [({0} if state[j] == 0 else {1} if state[j] == 1 else {0, 1}) for j in range(instance.n)]


def _propagate_regular_mask(aut: Automaton, mask: np.ndarray) -> np.ndarray:
    """mask: (periods, alphabet) bool.  A value survives at period j iff some
    word through the remaining domains uses it there and ends in a final
    state (domain consistency for this automaton).  Failed periods come back
    as all-False rows."""
    n = mask.shape[0]
    defined = aut.delta >= 0
    safe_delta = np.where(defined, aut.delta, 0)

    forward = np.zeros((n + 1, aut.state_count), dtype=bool)
    forward[0, aut.initial] = True
    for j in range(n):
        takeable = defined & mask[j][None, :] & forward[j][:, None]  # (Q, A)
        targets = safe_delta[takeable]
        if targets.size:
            forward[j + 1, targets] = True

    backward = np.zeros((n + 1, aut.state_count), dtype=bool)
    for q in aut.finals:
        backward[n, q] = True
    out = np.zeros_like(mask)
    for j in range(n - 1, -1, -1):
        lands_ok = defined & mask[j][None, :] & backward[j + 1][safe_delta]
        out[j] = (lands_ok & forward[j][:, None]).any(axis=0)
        backward[j] = lands_ok.any(axis=1)
    return out


def propagate_regular(automaton: Automaton, domains: Sequence[set[int]]) -> list[set[int]]:
    """Keep a value at a period only if some accepted word, drawn from the
    current domains, uses it there.  An empty returned domain means failure."""
    n = len(domains)
    mask = np.zeros((n, automaton.alphabet_size), dtype=bool)
    for j, dom in enumerate(domains):
        for a in dom:
            mask[j, a] = True
    filtered = _propagate_regular_mask(automaton, mask)
    return [set(int(a) for a in np.flatnonzero(filtered[j])) for j in range(n)]


# ---------------------------------------------------------------------------
# Search
# ---------------------------------------------------------------------------

class _LimitReached(Exception):
    pass


class _Search:
    def __init__(self, instance: Instance, mode: BoundingMode, model: Optional[GnnParams],
                 time_limit: Optional[float], max_nodes: Optional[int],
                 sg_root: SubgradientConfig, sg_node: SubgradientConfig):
        self.instance = instance
        self.mode = mode
        self.model = model
        self.time_limit = time_limit
        self.max_nodes = max_nodes
        self.sg_root = sg_root
        self.sg_node = sg_node
        self.started = time.perf_counter()
        self.node_count = 0
        self.bound_evaluations = 0
        self.sg_iterations_total = 0
        self.root_bound: Optional[float] = None
        self.incumbent: Optional[int] = None
        self.incumbent_solution: Optional[tuple[int, ...]] = None

    def enter_node(self) -> None:
        self.node_count += 1
        if self.max_nodes is not None and self.node_count > self.max_nodes:
            raise _LimitReached
        if self.time_limit is not None and time.perf_counter() - self.started > self.time_limit:
            raise _LimitReached

    def node_bound(self, partial: PartialAssignment, is_root: bool,
                   inherited: Optional[Multipliers]) -> tuple[Optional[float], Optional[Multipliers]]:
        """Dual bound for the node plus the multipliers handed to children.

        Returns (None, ...) when the node's sub-problems are infeasible, in
        which case the caller prunes.
        """
        mode = self.mode
        predict = (
            mode in (BoundingMode.CP_LEARN_ALL, BoundingMode.CP_LEARN_ALL_SG)
            or (mode is BoundingMode.CP_LEARN_ROOT_SG and is_root)
        )
        try:
            if predict:
                graph = encode_instance(self.instance, partial)
                mu0, _ = gnn_forward(self.model, graph)
            elif inherited is not None:
                mu0 = inherited
            else:
                mu0 = Multipliers.zeros(self.instance)
            if mode is BoundingMode.CP_LEARN_ALL:
                result = evaluate_bound(self.instance, partial, mu0)
                self.bound_evaluations += 1
                return result.bound, inherited
            cfg = self.sg_root if is_root else self.sg_node
            best_bound, best_mu, trace = optimize_multipliers(self.instance, partial, mu0, cfg)
            self.bound_evaluations += len(trace)
            self.sg_iterations_total += cfg.iterations
            keep = best_mu if mode is not BoundingMode.CP_LEARN_ALL_SG else inherited
            return best_bound, keep
        except Infeasible:
            return None, inherited

    def offer_incumbent(self, profit: int, solution: tuple[int, ...]) -> None:
        if self.incumbent is None or profit > self.incumbent:
            self.incumbent = profit
            self.incumbent_solution = solution

    def result(self, status: SolveStatus) -> SolveResult:
        return SolveResult(
            status=status,
            objective=self.incumbent,
            solution=self.incumbent_solution,
            node_count=self.node_count,
            wallclock=time.perf_counter() - self.started,
            bound_evaluations=self.bound_evaluations,
            sg_iterations_total=self.sg_iterations_total,
            root_bound=self.root_bound,
        )


def _mkp_branch_order(instance: MkpInstance) -> np.ndarray:
    caps = np.maximum(instance.capacities.astype(np.float64), 1.0)
    load = (instance.weights / caps[:, None]).sum(axis=0)
    score = instance.profits / (1.0 + load)
    return np.lexsort((np.arange(instance.n), -score))


def _solve_mkp(search: _Search, start: PartialAssignment) -> SolveResult:
    instance: MkpInstance = search.instance
    order = _mkp_branch_order(instance)
    state0 = np.full(instance.n, -1, dtype=np.int8)
    for j, v in start.fixed_items():
        state0[j] = v

    def dfs(state: np.ndarray, inherited: Optional[Multipliers], is_root: bool) -> None:
        search.enter_node()
        if not _propagate_mkp_state(instance, state):
            return
        included = state == 1
        fixed_profit = int(instance.profits @ included)
        free = np.flatnonzero(state == -1)
        if free.size == 0:
            search.offer_incumbent(fixed_profit, tuple(int(v) for v in state))
            return
        potential = fixed_profit + int(instance.profits[free].sum())
        if prune_test(float(potential), search.incumbent):
            return
        child_mu = inherited
        if search.mode.uses_bounds:
            partial = PartialAssignment(tuple(None if v < 0 else int(v) for v in state))
            bound, child_mu = search.node_bound(partial, is_root, inherited)
            if bound is None:
                return
            if is_root:
                search.root_bound = bound
            if prune_test(bound, search.incumbent):
                return
        j = next(int(i) for i in order if state[i] == -1)
        for value in (1, 0):
            child = state.copy()
            child[j] = value
            dfs(child, child_mu, False)

    try:
        dfs(state0.copy(), None, True)
    except _LimitReached:
        return search.result(SolveStatus.TIMED_OUT)
    if search.incumbent is None:
        return search.result(SolveStatus.INFEASIBLE)
    return search.result(SolveStatus.OPTIMAL)


def _solve_ssp(search: _Search, start: PartialAssignment) -> SolveResult:
    instance: SspInstance = search.instance
    n, acts = instance.periods, instance.activity_count
    profit_t = instance.profits.T  # (periods, activities)
    value_order = [
        sorted(range(acts), key=lambda a: (-int(profit_t[j, a]), a)) for j in range(n)
    ]
    mask0 = np.ones((n, acts), dtype=bool)
    for j, v in start.fixed_items():
        mask0[j] = False
        mask0[j, v] = True

    def propagate(mask: np.ndarray) -> Optional[np.ndarray]:
        changed = True
        while changed:
            changed = False
            for aut in instance.automata:
                filtered = _propagate_regular_mask(aut, mask)
                if not filtered.any(axis=1).all():
                    return None
                if not np.array_equal(filtered, mask):
                    changed = True
                    mask = filtered
        return mask

    def singleton_prefix(mask: np.ndarray) -> list[int]:
        head: list[int] = []
        counts = mask.sum(axis=1)
        for j in range(n):
            if counts[j] == 1:
                head.append(int(np.argmax(mask[j])))
            else:
                break
        return head

    def dfs(mask: np.ndarray, depth: int, inherited: Optional[Multipliers], is_root: bool) -> None:
        search.enter_node()
        filtered = propagate(mask)
        if filtered is None:
            return
        mask = filtered
        if depth >= n or mask.sum() == n:
            word = [int(np.argmax(mask[j])) for j in range(n)]
            profit = int(sum(profit_t[j, word[j]] for j in range(n)))
            search.offer_incumbent(profit, tuple(word))
            return
        potential = int(np.where(mask, profit_t, -1).max(axis=1).sum())
        if prune_test(float(potential), search.incumbent):
            return
        child_mu = inherited
        if search.mode.uses_bounds:
            head = singleton_prefix(mask)
            partial = PartialAssignment.prefix(n, head)
            bound, child_mu = search.node_bound(partial, is_root, inherited)
            if bound is None:
                return
            if is_root:
                search.root_bound = bound
            if prune_test(bound, search.incumbent):
                return
        j = depth
        while mask[j].sum() == 1:  # skip periods already forced by propagation
            j += 1
        for a in value_order[j]:
            if not mask[j, a]:
                continue
            child = mask.copy()
            child[j] = False
            child[j, a] = True
            dfs(child, j + 1, child_mu, False)

    try:
        dfs(mask0.copy(), start.depth, None, True)
    except _LimitReached:
        return search.result(SolveStatus.TIMED_OUT)
    if search.incumbent is None:
        return search.result(SolveStatus.INFEASIBLE)
    return search.result(SolveStatus.OPTIMAL)


def solve(
    instance: Instance,
    mode: BoundingMode,
    model: Optional[GnnParams] = None,
    *,
    time_limit: Optional[float] = None,
    max_nodes: Optional[int] = None,
    sg_root: Optional[SubgradientConfig] = None,
    sg_node: Optional[SubgradientConfig] = None,
    start: Optional[PartialAssignment] = None,
) -> SolveResult:
    """Exhaustive depth-first search for the optimum under ``start``.

    Raises:
        ValueError: a learned mode without a model, or a family mismatch.
    """
    if mode.uses_model:
        if model is None:
            raise ValueError(f"mode {mode.value} requires a model")
        if model.family != instance.family:
            raise ValueError(f"{model.family} model cannot bound a {instance.family} instance")
    start = start if start is not None else PartialAssignment.empty(instance.num_variables)
    start.validate_for(instance)
    search = _Search(
        instance, mode, model, time_limit, max_nodes,
        sg_root or default_sg_config(instance, root=True),
        sg_node or default_sg_config(instance, root=False),
    )
    if isinstance(instance, MkpInstance):
        return _solve_mkp(search, start)
    return _solve_ssp(search, start)
