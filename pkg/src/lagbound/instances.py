"""Problem instances: multi-dimensional knapsack and automaton-constrained scheduling.

Both families ship with seeded synthetic generators and a JSON on-disk format.
Multi-dimensional knapsack instances can additionally be read from the
OR-library style text layout (header ``n d``, profits, one weight row per
dimension, capacities).

Randomness comes from numpy's PCG64 so that identical arguments reproduce
bit-identical instances on every platform.  Draw order is part of the format
contract and is documented on each generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import GenerationError, Infeasible, InstanceFormatError

__all__ = [
    "MkpInstance",
    "Automaton",
    "SspInstance",
    "PartialAssignment",
    "generate_mkp",
    "generate_ssp",
    "read_instance",
    "write_instance",
]


@dataclass(frozen=True, eq=False)
class MkpInstance:
    """A 0/1 knapsack instance with one capacity constraint per dimension."""

    n: int
    d: int
    profits: np.ndarray  # (n,) non-negative int
    weights: np.ndarray  # (d, n) non-negative int
    capacities: np.ndarray  # (d,) non-negative int

    def __post_init__(self):
        object.__setattr__(self, "profits", np.asarray(self.profits, dtype=np.int64))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=np.int64))
        object.__setattr__(self, "capacities", np.asarray(self.capacities, dtype=np.int64))
        if self.n < 1 or self.d < 1:
            raise InstanceFormatError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if self.profits.shape != (self.n,):
            raise InstanceFormatError(f"profits has shape {self.profits.shape}, expected ({self.n},)")
        if self.weights.shape != (self.d, self.n):
            raise InstanceFormatError(f"weights has shape {self.weights.shape}, expected ({self.d}, {self.n})")
        if self.capacities.shape != (self.d,):
            raise InstanceFormatError(f"capacities has shape {self.capacities.shape}, expected ({self.d},)")
        if (self.profits < 0).any() or (self.weights < 0).any() or (self.capacities < 0).any():
            raise InstanceFormatError("profits, weights and capacities must be non-negative")

    @property
    def family(self) -> str:
        return "mkp"

    @property
    def num_variables(self) -> int:
        return self.n

    @property
    def num_subproblems(self) -> int:
        return self.d

    def __eq__(self, other) -> bool:
        if not isinstance(other, MkpInstance):
            return NotImplemented
        return (
            self.n == other.n
            and self.d == other.d
            and np.array_equal(self.profits, other.profits)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.capacities, other.capacities)
        )


@dataclass(frozen=True, eq=False)
class Automaton:
    """Deterministic finite automaton over integer symbols.

    Transitions are stored densely: ``delta[q, a]`` is the successor state or
    -1 when the transition is undefined.
    """

    state_count: int
    alphabet_size: int
    delta: np.ndarray  # (Q, A) int, -1 = undefined
    initial: int
    finals: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=np.int64))
        object.__setattr__(self, "finals", frozenset(int(q) for q in self.finals))
        if self.state_count < 1 or self.alphabet_size < 1:
            raise InstanceFormatError("automaton needs at least one state and one symbol")
        if self.delta.shape != (self.state_count, self.alphabet_size):
            raise InstanceFormatError(
                f"delta has shape {self.delta.shape}, expected ({self.state_count}, {self.alphabet_size})"
            )
        if not (0 <= self.initial < self.state_count):
            raise InstanceFormatError(f"initial state {self.initial} out of range")
        if any(not (0 <= q < self.state_count) for q in self.finals):
            raise InstanceFormatError("final state out of range")
        targets = self.delta[self.delta >= 0]
        if targets.size and targets.max() >= self.state_count:
            raise InstanceFormatError("transition target out of range")
        if (self.delta < -1).any():
            raise InstanceFormatError("transition entries must be >= -1")

    @classmethod
    def from_transitions(
        cls,
        state_count: int,
        alphabet_size: int,
        transitions: Sequence[tuple[int, int, int]],
        initial: int,
        finals: Sequence[int],
    ) -> "Automaton":
        """Build from (state, symbol, target) triples; duplicates must agree."""
        delta = np.full((state_count, alphabet_size), -1, dtype=np.int64)
        for q, a, t in transitions:
            if not (0 <= q < state_count and 0 <= a < alphabet_size):
                raise InstanceFormatError(f"transition ({q},{a},{t}) out of range")
            if delta[q, a] != -1 and delta[q, a] != t:
                raise InstanceFormatError(f"conflicting transitions for state {q}, symbol {a}")
            delta[q, a] = t
        return cls(state_count, alphabet_size, delta, initial, frozenset(finals))

    def transitions(self) -> list[tuple[int, int, int]]:
        """Defined transitions as sorted (state, symbol, target) triples."""
        qs, symbols = np.nonzero(self.delta >= 0)
        return [(int(q), int(a), int(self.delta[q, a])) for q, a in zip(qs, symbols)]

    def step(self, state: int, symbol: int) -> Optional[int]:
        t = int(self.delta[state, symbol])
        return None if t < 0 else t

    def __eq__(self, other) -> bool:
        if not isinstance(other, Automaton):
            return NotImplemented
        return (
            self.state_count == other.state_count
            and self.alphabet_size == other.alphabet_size
            and np.array_equal(self.delta, other.delta)
            and self.initial == other.initial
            and self.finals == other.finals
        )


@dataclass(frozen=True, eq=False)
class SspInstance:
    """Activity scheduling over a horizon, constrained by several automata."""

    periods: int
    activity_count: int
    automata: tuple[Automaton, ...]
    profits: np.ndarray  # (activity_count, periods) non-negative int

    def __post_init__(self):
        object.__setattr__(self, "automata", tuple(self.automata))
        object.__setattr__(self, "profits", np.asarray(self.profits, dtype=np.int64))
        if self.periods < 1 or self.activity_count < 1:
            raise InstanceFormatError("need at least one period and one activity")
        if not self.automata:
            raise InstanceFormatError("need at least one automaton")
        for k, aut in enumerate(self.automata):
            if aut.alphabet_size != self.activity_count:
                raise InstanceFormatError(
                    f"automaton {k} has alphabet {aut.alphabet_size}, expected {self.activity_count}"
                )
        if self.profits.shape != (self.activity_count, self.periods):
            raise InstanceFormatError(
                f"profits has shape {self.profits.shape}, expected ({self.activity_count}, {self.periods})"
            )
        if (self.profits < 0).any():
            raise InstanceFormatError("profits must be non-negative")

    @property
    def family(self) -> str:
        return "ssp"

    @property
    def num_variables(self) -> int:
        return self.periods

    @property
    def num_subproblems(self) -> int:
        return len(self.automata)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SspInstance):
            return NotImplemented
        return (
            self.periods == other.periods
            and self.activity_count == other.activity_count
            and self.automata == other.automata
            and np.array_equal(self.profits, other.profits)
        )


Instance = Union[MkpInstance, SspInstance]


@dataclass(frozen=True)
class PartialAssignment:
    """Optional value per variable; None marks a free variable.

    Knapsack partials may fix any subset of items to 0/1.  Scheduling partials
    must form a contiguous prefix so that every automaton collapses to a single
    current state.
    """

    values: tuple[Optional[int], ...]

    @classmethod
    def empty(cls, n: int) -> "PartialAssignment":
        return cls((None,) * n)

    @classmethod
    def of(cls, n: int, fixed: dict[int, int]) -> "PartialAssignment":
        vals: list[Optional[int]] = [None] * n
        for j, v in fixed.items():
            vals[j] = int(v)
        return cls(tuple(vals))

    @classmethod
    def prefix(cls, n: int, head: Sequence[int]) -> "PartialAssignment":
        if len(head) > n:
            raise ValueError(f"prefix of length {len(head)} exceeds {n} variables")
        return cls(tuple(int(v) for v in head) + (None,) * (n - len(head)))

    @property
    def depth(self) -> int:
        return sum(1 for v in self.values if v is not None)

    def free_indices(self) -> list[int]:
        return [j for j, v in enumerate(self.values) if v is None]

    def fixed_items(self) -> list[tuple[int, int]]:
        return [(j, v) for j, v in enumerate(self.values) if v is not None]

    def is_contiguous_prefix(self) -> bool:
        seen_free = False
        for v in self.values:
            if v is None:
                seen_free = True
            elif seen_free:
                return False
        return True

    def validate_for(self, instance: Instance) -> None:
        """Raise ValueError when the partial does not fit the instance."""
        if len(self.values) != instance.num_variables:
            raise ValueError(
                f"partial covers {len(self.values)} variables, instance has {instance.num_variables}"
            )
        if isinstance(instance, MkpInstance):
            for j, v in self.fixed_items():
                if v not in (0, 1):
                    raise ValueError(f"item {j} fixed to {v}, expected 0 or 1")
        else:
            if not self.is_contiguous_prefix():
                raise ValueError("scheduling partials must fix a contiguous prefix")
            for j, v in self.fixed_items():
                if not (0 <= v < instance.activity_count):
                    raise ValueError(f"period {j} fixed to activity {v}, out of range")


def generate_mkp(n: int, d: int, tightness: float = 0.5, seed: int = 0) -> MkpInstance:
    """Sample a knapsack instance with uniform profits and weights.

    Profits are drawn uniformly from {0..500} (one draw per item), then
    weights uniformly from {0..100} row by row (dimension-major).  Each
    capacity is ``tightness`` times the total weight of its dimension,
    rounded half-up.

    Args:
        n: item count (>= 1)
        d: dimension count (>= 1)
        tightness: capacity as a fraction of total weight, in (0, 1]
        seed: PCG64 seed; identical arguments give bit-identical instances
    """
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    if not (0.0 < tightness <= 1.0):
        raise ValueError("tightness must be in (0, 1]")
    rng = np.random.Generator(np.random.PCG64(seed))
    profits = rng.integers(0, 500, size=n, endpoint=True)
    weights = rng.integers(0, 100, size=(d, n), endpoint=True)
    capacities = np.floor(tightness * weights.sum(axis=1) + 0.5).astype(np.int64)
    return MkpInstance(n=n, d=d, profits=profits, weights=weights, capacities=capacities)


def _sample_automaton(rng: np.random.Generator, state_count: int, alphabet_size: int,
                      undef_fraction: float, final_fraction: float) -> Automaton:
    # Draw order: undefined mask (Q*A uniforms), targets (Q*A ints), final mask
    # (Q uniforms), fallback final state (one int when no state qualified).
    undef = rng.random(size=(state_count, alphabet_size)) < undef_fraction
    targets = rng.integers(0, state_count, size=(state_count, alphabet_size))
    delta = np.where(undef, -1, targets)
    final_mask = rng.random(size=state_count) < final_fraction
    if not final_mask.any():
        final_mask[rng.integers(0, state_count)] = True
    finals = frozenset(int(q) for q in np.flatnonzero(final_mask))
    return Automaton(state_count, alphabet_size, delta, initial=0, finals=finals)


def _joint_feasible(automata: Sequence[Automaton], periods: int) -> bool:
    """Exact check: does some length-n word satisfy every automaton at once?"""
    states = {tuple(a.initial for a in automata)}
    alphabet = automata[0].alphabet_size
    for _ in range(periods):
        nxt = set()
        for joint in states:
            for a in range(alphabet):
                step = []
                for aut, q in zip(automata, joint):
                    t = int(aut.delta[q, a])
                    if t < 0:
                        break
                    step.append(t)
                else:
                    nxt.add(tuple(step))
        if not nxt:
            return False
        states = nxt
    return any(all(q in aut.finals for aut, q in zip(automata, joint)) for joint in states)


def generate_ssp(
    periods: int,
    activity_count: int,
    state_count: int,
    undef_fraction: float = 0.3,
    final_fraction: float = 0.5,
    constraint_count: int = 2,
    seed: int = 0,
    max_attempts: int = 1000,
) -> SspInstance:
    """Sample a scheduling instance whose automata jointly accept some word.

    Per attempt the draw order is: profits (activity-major), then each
    automaton in turn (see ``_sample_automaton``).  Attempt k uses
    ``SeedSequence([seed, k])``; infeasible draws are discarded and the next
    sub-seed is tried, so the result is still a pure function of the
    arguments.

    Raises:
        GenerationError: no jointly feasible instance within ``max_attempts``.
    """
    if periods < 1 or activity_count < 1 or state_count < 1:
        raise ValueError("periods, activity_count and state_count must be >= 1")
    if not (0.0 <= undef_fraction < 1.0):
        raise ValueError("undef_fraction must be in [0, 1)")
    if not (0.0 < final_fraction <= 1.0):
        raise ValueError("final_fraction must be in (0, 1]")
    if constraint_count < 1:
        raise ValueError("constraint_count must be >= 1")
    for attempt in range(max_attempts):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, attempt])))
        profits = rng.integers(0, 100, size=(activity_count, periods), endpoint=True)
        automata = tuple(
            _sample_automaton(rng, state_count, activity_count, undef_fraction, final_fraction)
            for _ in range(constraint_count)
        )
        if _joint_feasible(automata, periods):
            return SspInstance(periods=periods, activity_count=activity_count,
                               automata=automata, profits=profits)
    raise GenerationError(
        f"no feasible instance in {max_attempts} attempts (seed={seed}, "
        f"Q={state_count}, activities={activity_count})"
    )


def check_partial_feasible(instance: Instance, partial: PartialAssignment) -> bool:
    """True when the partial assignment admits at least one feasible completion."""
    partial.validate_for(instance)
    if isinstance(instance, MkpInstance):
        fixed_in = [j for j, v in partial.fixed_items() if v == 1]
        used = instance.weights[:, fixed_in].sum(axis=1) if fixed_in else np.zeros(instance.d, dtype=np.int64)
        return bool((used <= instance.capacities).all())
    head = [v for v in partial.values if v is not None]
    automata = instance.automata
    states = []
    for aut in automata:
        q = aut.initial
        for a in head:
            nxt = aut.step(q, a)
            if nxt is None:
                return False
            q = nxt
        states.append(q)
    remaining = instance.periods - len(head)
    joint = {tuple(states)}
    alphabet = instance.activity_count
    for _ in range(remaining):
        nxt_set = set()
        for js in joint:
            for a in range(alphabet):
                step = []
                for aut, q in zip(automata, js):
                    t = aut.step(q, a)
                    if t is None:
                        break
                    step.append(t)
                else:
                    nxt_set.add(tuple(step))
        if not nxt_set:
            return False
        joint = nxt_set
    return any(all(q in aut.finals for aut, q in zip(automata, js)) for js in joint)


# ---------------------------------------------------------------------------
# On-disk formats
# ---------------------------------------------------------------------------

def _instance_to_json(instance: Instance) -> dict:
    if isinstance(instance, MkpInstance):
        return {
            "kind": "mkp",
            "n": instance.n,
            "d": instance.d,
            "profits": instance.profits.tolist(),
            "weights": instance.weights.tolist(),
            "capacities": instance.capacities.tolist(),
        }
    return {
        "kind": "ssp",
        "periods": instance.periods,
        "activities": instance.activity_count,
        "profits": instance.profits.tolist(),
        "automata": [
            {
                "states": aut.state_count,
                "initial": aut.initial,
                "final": sorted(aut.finals),
                "transitions": [[q, a, t] for q, a, t in aut.transitions()],
            }
            for aut in instance.automata
        ],
    }


def _instance_from_json(doc: dict, where: str) -> Instance:
    try:
        kind = doc["kind"]
    except (KeyError, TypeError):
        raise InstanceFormatError(f"{where}: missing 'kind' field") from None
    try:
        if kind == "mkp":
            return MkpInstance(
                n=int(doc["n"]),
                d=int(doc["d"]),
                profits=doc["profits"],
                weights=doc["weights"],
                capacities=doc["capacities"],
            )
        if kind == "ssp":
            automata = [
                Automaton.from_transitions(
                    state_count=int(a["states"]),
                    alphabet_size=int(doc["activities"]),
                    transitions=[tuple(t) for t in a["transitions"]],
                    initial=int(a["initial"]),
                    finals=[int(q) for q in a["final"]],
                )
                for a in doc["automata"]
            ]
            return SspInstance(
                periods=int(doc["periods"]),
                activity_count=int(doc["activities"]),
                automata=tuple(automata),
                profits=doc["profits"],
            )
    except KeyError as exc:
        raise InstanceFormatError(f"{where}: missing field {exc}") from None
    except (ValueError, TypeError) as exc:
        raise InstanceFormatError(f"{where}: {exc}") from None
    raise InstanceFormatError(f"{where}: unknown instance kind {kind!r}")


class _TokenReader:
    """Whitespace token stream that remembers line numbers for diagnostics."""

    def __init__(self, text: str, where: str):
        self.where = where
        self.tokens: list[tuple[int, str]] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            for tok in line.split():
                self.tokens.append((lineno, tok))
        self.pos = 0

    def next_int(self, what: str) -> int:
        if self.pos >= len(self.tokens):
            raise InstanceFormatError(f"{self.where}: unexpected end of file while reading {what}")
        lineno, tok = self.tokens[self.pos]
        self.pos += 1
        try:
            return int(tok)
        except ValueError:
            raise InstanceFormatError(
                f"{self.where}: line {lineno}: expected integer for {what}, got {tok!r}"
            ) from None

    def exhausted(self) -> bool:
        return self.pos >= len(self.tokens)


def _parse_mkp_text(text: str, where: str) -> MkpInstance:
    r = _TokenReader(text, where)
    n = r.next_int("item count")
    d = r.next_int("dimension count")
    if n < 1 or d < 1:
        raise InstanceFormatError(f"{where}: header requires n >= 1 and d >= 1, got n={n}, d={d}")
    profits = [r.next_int(f"profit of item {j}") for j in range(n)]
    weights = [[r.next_int(f"weight[{k}][{j}]") for j in range(n)] for k in range(d)]
    capacities = [r.next_int(f"capacity of dimension {k}") for k in range(d)]
    if not r.exhausted():
        lineno, tok = r.tokens[r.pos]
        raise InstanceFormatError(f"{where}: line {lineno}: trailing token {tok!r}")
    return MkpInstance(n=n, d=d, profits=profits, weights=weights, capacities=capacities)


def read_instance(path: Union[str, Path]) -> Instance:
    """Read an instance from JSON or from the knapsack text format."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InstanceFormatError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        return _instance_from_json(doc, str(path))
    return _parse_mkp_text(text, str(path))


def write_instance(instance: Instance, path: Union[str, Path]) -> None:
    """Write the JSON form; ``read_instance`` restores an equal instance."""
    path = Path(path)
    doc = _instance_to_json(instance)
    path.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8")
