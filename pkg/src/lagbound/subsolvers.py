"""Exact solvers for the decomposed sub-problems.

Both solvers take real-valued objectives (the multiplier-adjusted profits)
but integral structure (integer weights, finite automata), so dynamic
programming is exact.  Ties are broken deterministically: the knapsack
prefers excluding an item, the automaton solver returns the lexicographically
smallest optimal activity sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible
from .instances import Automaton, PartialAssignment

__all__ = ["KnapsackSubproblem", "RegularSubproblem", "solve_knapsack", "solve_regular"]

NEG_INF = float("-inf")


@dataclass(frozen=True)
class KnapsackSubproblem:
    """One-dimensional 0/1 knapsack with real item values."""

    weights: np.ndarray  # (n,) non-negative int
    capacity: int
    values: np.ndarray  # (n,) float
    fixed: PartialAssignment

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        n = self.weights.shape[0]
        if self.values.shape != (n,):
            raise ValueError(f"values has shape {self.values.shape}, expected ({n},)")
        if len(self.fixed.values) != n:
            raise ValueError("fixed assignment length does not match item count")
        if self.capacity < 0:
            raise ValueError("capacity must be non-negative")
        if (self.weights < 0).any():
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class RegularSubproblem:
    """Maximum-value accepted word of fixed length, one value per (period, symbol)."""

    automaton: Automaton
    arc_values: np.ndarray  # (periods, alphabet) float
    fixed: PartialAssignment

    def __post_init__(self):
        object.__setattr__(self, "arc_values", np.asarray(self.arc_values, dtype=np.float64))
        if self.arc_values.ndim != 2 or self.arc_values.shape[1] != self.automaton.alphabet_size:
            raise ValueError(
                f"arc_values has shape {self.arc_values.shape}, expected "
                f"(periods, {self.automaton.alphabet_size})"
            )
        if len(self.fixed.values) != self.arc_values.shape[0]:
            raise ValueError("fixed assignment length does not match period count")
        if not self.fixed.is_contiguous_prefix():
            raise ValueError("fixed assignment must be a contiguous prefix")


def solve_knapsack(sub: KnapsackSubproblem) -> tuple[float, np.ndarray]:
    """Exact 0/1 knapsack over the free items; fixed items are folded in.

    Fixed-out items are removed, fixed-in items pre-consume capacity and
    pre-add value.  The DP table is indexed by integer capacity, values stay
    in floating point.  On equal value the item is excluded.

    Returns:
        (optimal value, full 0/1 selection vector of length n)

    Raises:
        Infeasible: the fixed-in items alone exceed the capacity.
    """
    n = sub.weights.shape[0]
    selection = np.zeros(n, dtype=np.int64)
    base_value = 0.0
    residual = int(sub.capacity)
    free: list[int] = []
    for j, v in enumerate(sub.fixed.values):
        if v is None:
            free.append(j)
        elif v == 1:
            selection[j] = 1
            base_value += float(sub.values[j])
            residual -= int(sub.weights[j])
    if residual < 0:
        raise Infeasible(f"fixed items exceed capacity by {-residual}")
    if not free:
        return base_value, selection

    w = sub.weights[free]
    v = sub.values[free]
    # dp[c] = best free-item value within capacity c; take[i][c] records the
    # strict-improvement decision so backtracking reproduces the tie-break.
    dp = np.zeros(residual + 1, dtype=np.float64)
    take = np.zeros((len(free), residual + 1), dtype=bool)
    for i in range(len(free)):
        wi = int(w[i])
        if wi > residual:
            continue
        cand = np.full(residual + 1, NEG_INF)
        if wi == 0:
            cand[:] = dp + v[i]
        else:
            cand[wi:] = dp[:residual + 1 - wi] + v[i]
        better = cand > dp
        take[i] = better
        dp = np.where(better, cand, dp)

    c = residual
    for i in range(len(free) - 1, -1, -1):
        if take[i, c]:
            selection[free[i]] = 1
            c -= int(w[i])
    return base_value + float(dp[residual]), selection


def solve_regular(sub: RegularSubproblem) -> tuple[float, list[int]]:
    """Best accepted completion of the fixed prefix, by layered DP.

    Runs the automaton forward through the prefix, then computes, backwards
    from the final states, the best achievable value from every (period,
    state).  The forward reconstruction picks the smallest activity that
    attains the optimum, so the result is the lexicographically smallest
    optimal sequence.  Complexity O(periods * alphabet * states).

    Raises:
        Infeasible: the prefix leaves no accepting completion.
    """
    aut = sub.automaton
    n = sub.arc_values.shape[0]
    head = [v for v in sub.fixed.values if v is not None]
    value = 0.0
    state = aut.initial
    for j, a in enumerate(head):
        nxt = aut.step(state, a)
        if nxt is None:
            raise Infeasible(f"prefix breaks the automaton at period {j}")
        value += float(sub.arc_values[j, a])
        state = nxt
    depth = len(head)

    # best[j][q] = max value collectable over periods j..n-1 starting in q.
    best = np.full((n - depth + 1, aut.state_count), NEG_INF)
    for q in aut.finals:
        best[n - depth, q] = 0.0
    defined = aut.delta >= 0
    targets = np.where(defined, aut.delta, 0)
    for j in range(n - depth - 1, -1, -1):
        # reachable value through symbol a from state q: arc + best[j+1][delta]
        step_vals = np.where(defined, best[j + 1][targets] + sub.arc_values[depth + j][None, :], NEG_INF)
        best[j] = step_vals.max(axis=1)
    if best[0, state] == NEG_INF:
        raise Infeasible("no accepting completion of the required length")

    sequence = list(head)
    q = state
    for j in range(n - depth):
        target = best[j, q]
        chosen = -1
        for a in range(aut.alphabet_size):
            t = aut.step(q, a)
            if t is None:
                continue
            if sub.arc_values[depth + j, a] + best[j + 1, t] == target:
                chosen = a
                break
        assert chosen >= 0, "backward table admits no consistent forward step"
        sequence.append(chosen)
        value += float(sub.arc_values[depth + j, chosen])
        q = aut.step(q, chosen)
    assert q in aut.finals
    return value, sequence
