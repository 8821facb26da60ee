"""Self-supervised training: minimize the decomposition bound produced by the
network's own multipliers.

Each epoch samples one dataset entry, evaluates the bound at the predicted
multipliers, and backpropagates the bound's local slope (copy-difference per
coordinate) through the network.  No labelled multipliers are involved: the
bound itself is the loss, and it stays a valid upper bound at every step.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .encoding import encode_instance
from .errors import GenerationError, Infeasible
from .instances import (
    Instance,
    MkpInstance,
    PartialAssignment,
    SspInstance,
    check_partial_feasible,
)
from .lagrangian import evaluate_bound
from .neural import (
    GnnParams,
    adam_state_for,
    adam_step,
    gnn_backward,
    gnn_forward,
    init_params,
    load_model,
)

logger = logging.getLogger(__name__)

__all__ = ["Dataset", "TrainConfig", "TrainReport", "augment", "train", "evaluate"]


@dataclass(frozen=True)
class Dataset:
    """Homogeneous list of (instance, partial assignment) training entries."""

    family: str
    entries: tuple[tuple[Instance, PartialAssignment], ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("dataset must be non-empty")
        for instance, partial in self.entries:
            if instance.family != self.family:
                raise ValueError(f"dataset mixes {self.family} and {instance.family} instances")
            partial.validate_for(instance)

    @classmethod
    def of(cls, entries) -> "Dataset":
        entries = tuple(entries)
        if not entries:
            raise ValueError("dataset must be non-empty")
        return cls(entries[0][0].family, entries)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 0.001
    seed: int = 0
    augmentation_depth: int = 5
    batch_size: int = 1
    checkpoint_every: int = 0  # 0 disables checkpoints
    init_model: Optional[str] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.augmentation_depth < 0:
            raise ValueError("augmentation_depth must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainReport:
    """Per-epoch mean bound plus bookkeeping counters."""

    history: list[float] = field(default_factory=list)
    entry_ids: list[int] = field(default_factory=list)
    wallclock: list[float] = field(default_factory=list)
    skipped_infeasible: int = 0


def _random_mkp_partial(instance: MkpInstance, depth: int, rng: np.random.Generator,
                        max_attempts: int) -> PartialAssignment:
    for _ in range(max_attempts):
        items = rng.choice(instance.n, size=depth, replace=False)
        values = rng.integers(0, 2, size=depth)
        partial = PartialAssignment.of(instance.n, {int(j): int(v) for j, v in zip(items, values)})
        if check_partial_feasible(instance, partial):
            return partial
    raise GenerationError(f"no feasible depth-{depth} partial after {max_attempts} attempts")


def _random_ssp_prefix(instance: SspInstance, depth: int, rng: np.random.Generator,
                       max_attempts: int) -> PartialAssignment:
    # Grow the prefix one period at a time, drawing uniformly among the
    # activities that keep a joint accepting completion alive.
    head: list[int] = []
    for _ in range(depth):
        options = [
            a for a in range(instance.activity_count)
            if check_partial_feasible(instance, PartialAssignment.prefix(instance.periods, head + [a]))
        ]
        if not options:
            raise GenerationError("prefix sampling reached a dead end on a feasible instance")
        head.append(int(options[int(rng.integers(0, len(options)))]))
    return PartialAssignment.prefix(instance.periods, head)


def augment(instance: Instance, depth: int, count_per_instance: int, seed: int = 0,
            max_attempts: int = 1000) -> list[tuple[Instance, PartialAssignment]]:
    """Entries with partial assignments of uniform random depth in {0..depth}.

    The first entry always carries the empty partial.  Every emitted partial
    admits at least one feasible completion; infeasible draws are rejected.

    Raises:
        GenerationError: rejection sampling exhausted ``max_attempts``.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    depth = min(depth, instance.num_variables)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([0x4A7, seed])))
    out: list[tuple[Instance, PartialAssignment]] = []
    for k in range(count_per_instance):
        if k == 0:
            out.append((instance, PartialAssignment.empty(instance.num_variables)))
            continue
        target = int(rng.integers(0, depth + 1))
        if target == 0:
            partial = PartialAssignment.empty(instance.num_variables)
        elif isinstance(instance, MkpInstance):
            partial = _random_mkp_partial(instance, target, rng, max_attempts)
        else:
            partial = _random_ssp_prefix(instance, target, rng, max_attempts)
        out.append((instance, partial))
    return out


def train(
    dataset: Dataset,
    cfg: TrainConfig,
    init: Optional[GnnParams] = None,
    on_checkpoint: Optional[Callable[[int, GnnParams], None]] = None,
) -> tuple[GnnParams, TrainReport]:
    """Run the bound-minimization loop for cfg.epochs optimizer steps.

    One epoch draws ``batch_size`` entries (default 1), averages their bound
    gradients, and applies one Adam update.  Entries whose sub-problems are
    infeasible are skipped with a warning; they carry no gradient.  The whole
    run is a pure function of (dataset, cfg, init).
    """
    if init is None and cfg.init_model:
        init, _ = load_model(cfg.init_model)
    if init is None:
        graph0 = encode_instance(*dataset.entries[0])
        init = init_params(dataset.family, graph0.node_width, graph0.edge_width, seed=cfg.seed)
    if init.family != dataset.family:
        raise ValueError(f"{init.family} model cannot train on a {dataset.family} dataset")

    params = init
    state = adam_state_for(params)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([0x7E41, cfg.seed])))
    report = TrainReport()
    started = time.perf_counter()
    for epoch in range(cfg.epochs):
        grads_sum = None
        bounds: list[float] = []
        first_entry = -1
        for _ in range(cfg.batch_size):
            idx = int(rng.integers(0, len(dataset.entries)))
            if first_entry < 0:
                first_entry = idx
            instance, partial = dataset.entries[idx]
            try:
                graph = encode_instance(instance, partial)
                mu, cache = gnn_forward(params, graph)
                result = evaluate_bound(instance, partial, mu)
            except Infeasible as exc:
                report.skipped_infeasible += 1
                logger.warning("skipping infeasible sample %d: %s", idx, exc)
                continue
            grads = gnn_backward(params, cache, result.subgradient)
            bounds.append(result.bound)
            if grads_sum is None:
                grads_sum = grads
            else:
                for name in grads_sum:
                    grads_sum[name] += grads[name]
        if grads_sum is not None:
            if len(bounds) > 1:
                for name in grads_sum:
                    grads_sum[name] /= len(bounds)
            params, state = adam_step(params, grads_sum, state, lr=cfg.lr)
        report.history.append(float(np.mean(bounds)) if bounds else float("nan"))
        report.entry_ids.append(first_entry)
        report.wallclock.append(time.perf_counter() - started)
        if cfg.checkpoint_every and on_checkpoint and (epoch + 1) % cfg.checkpoint_every == 0:
            on_checkpoint(epoch + 1, params)
    return params, report


def evaluate(
    params: GnnParams,
    valset: Dataset,
    with_gap: bool = False,
    gap_node_budget: int = 200_000,
) -> tuple[float, Optional[float]]:
    """Mean predicted bound over the validation set, optionally with the mean
    percentage gap to the true optima.

    Optima are closed with the exact tree search under a node budget; when no
    entry can be closed (or every optimum is zero) the gap is None.
    """
    from .solver import BoundingMode, SolveStatus, solve  # deferred: solver is heavier than training needs

    bounds = []
    gaps = []
    for instance, partial in valset.entries:
        graph = encode_instance(instance, partial)
        mu, _ = gnn_forward(params, graph)
        result = evaluate_bound(instance, partial, mu)
        bounds.append(result.bound)
        if with_gap:
            res = solve(instance, BoundingMode.CP_SG, start=partial,
                        max_nodes=gap_node_budget)
            if res.status == SolveStatus.OPTIMAL and res.objective > 0:
                gaps.append(100.0 * (result.bound - res.objective) / res.objective)
    mean_gap = float(np.mean(gaps)) if gaps else None
    return float(np.mean(bounds)), mean_gap
