"""Decomposition bound: split an instance into one sub-problem per constraint,
price the variable copies with multipliers, and sum the sub-optima.

For any finite multiplier vector the resulting value is a provable upper
bound on the best feasible completion of the current partial assignment:
every feasible solution assigns identical values to all variable copies, so
the penalty terms vanish on it while each sub-problem may only improve on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import Infeasible
from .instances import Instance, MkpInstance, PartialAssignment, SspInstance
from .subsolvers import (
    KnapsackSubproblem,
    RegularSubproblem,
    solve_knapsack,
    solve_regular,
)

__all__ = [
    "Multipliers",
    "BoundResult",
    "SubgradientConfig",
    "evaluate_bound",
    "subgradient_step",
    "optimize_multipliers",
    "default_sg_config",
]


@dataclass(frozen=True, eq=False)
class Multipliers:
    """Penalty vector per duplicated sub-problem, stored as one dense array.

    Knapsack: shape (d-1, n), entry (i, j) prices item j in dimension i+1.
    Scheduling: shape (m-1, periods, activities).  Entries for variables fixed
    by a partial assignment are ignored by the bound (their copies are forced
    equal, so their penalty is identically zero).
    """

    family: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.family not in ("mkp", "ssp"):
            raise ValueError(f"unknown family {self.family!r}")
        expected_ndim = 2 if self.family == "mkp" else 3
        if self.values.ndim != expected_ndim:
            raise ValueError(
                f"{self.family} multipliers need {expected_ndim} axes, got {self.values.ndim}"
            )
        if self.values.size and not np.isfinite(self.values).all():
            raise ValueError("multipliers must be finite")

    @classmethod
    def zeros(cls, instance: Instance) -> "Multipliers":
        if isinstance(instance, MkpInstance):
            shape: tuple[int, ...] = (instance.d - 1, instance.n)
        else:
            shape = (len(instance.automata) - 1, instance.periods, instance.activity_count)
        return cls(instance.family, np.zeros(shape))

    def check_shape(self, instance: Instance) -> None:
        if self.family != instance.family:
            raise ValueError(f"{self.family} multipliers applied to a {instance.family} instance")
        expected = Multipliers.zeros(instance).values.shape
        if self.values.shape != expected:
            raise ValueError(f"multiplier shape {self.values.shape}, instance needs {expected}")

    def with_values(self, values: np.ndarray) -> "Multipliers":
        return Multipliers(self.family, values)


@dataclass(frozen=True)
class BoundResult:
    """Bound value, per-sub-problem optima, their solutions, and the bound's
    local slope with respect to the multipliers."""

    bound: float
    main_value: float  # optimum of the objective-carrying sub-problem
    penalty_values: np.ndarray  # (m-1,) optima of the penalty sub-problems
    solutions: list  # solution of each sub-problem, index 0 = objective one
    subgradient: Multipliers  # coordinate = copy-0 indicator minus copy-i indicator


@dataclass(frozen=True)
class SubgradientConfig:
    """Geometric step schedule for the multiplier optimization."""

    iterations: int = 200
    alpha0: float = 1.0
    decay: float = 0.99

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not (self.alpha0 > 0):
            raise ValueError("alpha0 must be positive")
        if not (0 < self.decay <= 1):
            raise ValueError("decay must be in (0, 1]")


def default_sg_config(instance: Instance, root: bool = True) -> SubgradientConfig:
    """Family defaults: step size scales with the profit range."""
    if isinstance(instance, MkpInstance):
        alpha0 = max(float(instance.profits.max()), 1.0) / 500.0 if instance.n else 1.0
        return SubgradientConfig(iterations=600 if root else 20, alpha0=max(alpha0, 1e-6), decay=0.99)
    return SubgradientConfig(iterations=40 if root else 20, alpha0=0.5, decay=0.95)


def _free_mask_mkp(instance: MkpInstance, partial: PartialAssignment) -> np.ndarray:
    mask = np.ones(instance.n, dtype=bool)
    for j, _ in partial.fixed_items():
        mask[j] = False
    return mask


def _evaluate_mkp(instance: MkpInstance, partial: PartialAssignment, mu: Multipliers) -> BoundResult:
    free = _free_mask_mkp(instance, partial)
    # Objective sub-problem: original profits plus the summed penalties on
    # free items, solved on the first dimension.
    adjusted = instance.profits.astype(np.float64).copy()
    if instance.d > 1:
        adjusted[free] += mu.values[:, free].sum(axis=0)
    main_value, x0 = solve_knapsack(
        KnapsackSubproblem(instance.weights[0], int(instance.capacities[0]), adjusted, partial)
    )
    solutions = [x0]
    penalty_values = np.zeros(instance.d - 1)
    sg = np.zeros_like(mu.values)
    for i in range(1, instance.d):
        vals = np.zeros(instance.n)
        vals[free] = -mu.values[i - 1, free]
        value, xi = solve_knapsack(
            KnapsackSubproblem(instance.weights[i], int(instance.capacities[i]), vals, partial)
        )
        penalty_values[i - 1] = value
        solutions.append(xi)
        sg[i - 1] = x0 - xi
    bound = float(main_value + penalty_values.sum())
    return BoundResult(bound, float(main_value), penalty_values, solutions, mu.with_values(sg))


def _one_hot(sequence: list[int], periods: int, activities: int) -> np.ndarray:
    enc = np.zeros((periods, activities))
    enc[np.arange(periods), sequence] = 1.0
    return enc


def _evaluate_ssp(instance: SspInstance, partial: PartialAssignment, mu: Multipliers) -> BoundResult:
    depth = partial.depth
    m = len(instance.automata)
    base = instance.profits.T.astype(np.float64)  # (periods, activities)
    adjusted = base.copy()
    if m > 1:
        adjusted[depth:] += mu.values[:, depth:].sum(axis=0)
    main_value, seq0 = solve_regular(RegularSubproblem(instance.automata[0], adjusted, partial))
    solutions = [seq0]
    x0 = _one_hot(seq0, instance.periods, instance.activity_count)
    penalty_values = np.zeros(m - 1)
    sg = np.zeros_like(mu.values)
    for i in range(1, m):
        vals = np.zeros_like(base)
        vals[depth:] = -mu.values[i - 1, depth:]
        value, seqi = solve_regular(RegularSubproblem(instance.automata[i], vals, partial))
        penalty_values[i - 1] = value
        solutions.append(seqi)
        sg[i - 1] = x0 - _one_hot(seqi, instance.periods, instance.activity_count)
    bound = float(main_value + penalty_values.sum())
    return BoundResult(bound, float(main_value), penalty_values, solutions, mu.with_values(sg))


def evaluate_bound(instance: Instance, partial: PartialAssignment, mu: Multipliers) -> BoundResult:
    """Solve every sub-problem under ``partial`` and sum their optima.

    The result is an upper bound on the profit of the best feasible
    completion of ``partial``, for any finite ``mu``.

    Raises:
        Infeasible: some sub-problem has no solution under ``partial``.
    """
    mu.check_shape(instance)
    partial.validate_for(instance)
    if isinstance(instance, MkpInstance):
        return _evaluate_mkp(instance, partial, mu)
    return _evaluate_ssp(instance, partial, mu)


def subgradient_step(mu: Multipliers, bound: BoundResult, alpha: float) -> Multipliers:
    """Move every multiplier by ``alpha`` times the bound's local slope.

    Positive ``alpha`` follows the slope (raising the bound locally); pass a
    negative ``alpha`` to descend.  ``optimize_multipliers`` always descends.
    """
    if bound.subgradient.values.shape != mu.values.shape:
        raise ValueError("subgradient shape does not match multipliers")
    return mu.with_values(mu.values + alpha * bound.subgradient.values)


def optimize_multipliers(
    instance: Instance,
    partial: PartialAssignment,
    mu0: Multipliers,
    cfg: SubgradientConfig,
) -> tuple[float, Multipliers, list[float]]:
    """Iteratively tighten the bound with geometric-decay sub-gradient steps.

    Step t uses size alpha0 * decay**t in the bound-lowering direction.  The
    trace holds iterations+1 bound values, the first being the bound at mu0;
    the returned multipliers are the ones achieving the smallest bound seen.

    Raises:
        Infeasible: propagated from any bound evaluation.
    """
    result = evaluate_bound(instance, partial, mu0)
    trace = [result.bound]
    best_bound, best_mu = result.bound, mu0
    mu = mu0
    for t in range(cfg.iterations):
        mu = subgradient_step(mu, result, -cfg.alpha0 * cfg.decay**t)
        result = evaluate_bound(instance, partial, mu)
        trace.append(result.bound)
        if result.bound < best_bound:
            best_bound, best_mu = result.bound, mu
    return best_bound, best_mu, trace
