"""Feature-graph encoding of an instance plus a partial assignment.

One node is created per (free variable, constraint) pair for knapsacks and
per (free period, constraint, activity) triple for scheduling.  Nodes whose
constraint index is 1 or higher carry a multiplier coordinate; constraint-0
nodes participate in message passing only.  All features are normalized to
roughly unit scale; the graph records the profit scale so predicted
multipliers can be mapped back to profit units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import Infeasible
from .instances import Instance, MkpInstance, PartialAssignment, SspInstance

__all__ = ["FeatureGraph", "encode_mkp", "encode_ssp", "encode_instance", "dump_graph_json"]

MKP_NODE_FEATURES = 6
SSP_NODE_FEATURES = 4
EDGE_FEATURES = 2  # one-hot: [shares variable, shares constraint]


@dataclass(frozen=True, eq=False)
class FeatureGraph:
    """Undirected graph with per-node features and a node-to-multiplier map.

    ``edges`` stores directed pairs; both orientations of every undirected
    edge are present with identical features.  ``multiplier_map`` is
    injective and covers exactly the multiplier coordinates that are free
    under the encoded partial assignment.
    """

    family: str
    node_features: np.ndarray  # (V, p) float
    edges: np.ndarray  # (E, 2) int, directed pairs
    edge_features: np.ndarray  # (E, q) float
    multiplier_map: dict[int, tuple]  # node index -> multiplier coordinate
    multiplier_shape: tuple[int, ...]  # full multiplier array shape of the instance
    multiplier_scale: float  # profit scale applied to predicted outputs

    def __post_init__(self):
        object.__setattr__(self, "node_features", np.asarray(self.node_features, dtype=np.float64))
        object.__setattr__(self, "edges", np.asarray(self.edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "edge_features", np.asarray(self.edge_features, dtype=np.float64))
        v = self.node_features.shape[0]
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= v):
            raise ValueError("edge endpoint out of range")
        if self.edge_features.shape[0] != self.edges.shape[0]:
            raise ValueError("edge feature count does not match edge count")
        if len(set(self.multiplier_map.values())) != len(self.multiplier_map):
            raise ValueError("multiplier map is not injective")
        if not np.isfinite(self.node_features).all():
            raise ValueError("node features must be finite")

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def node_width(self) -> int:
        return self.node_features.shape[1]

    @property
    def edge_width(self) -> int:
        return self.edge_features.shape[1] if self.edge_features.size else EDGE_FEATURES


def _sym(pairs: list[tuple[int, int]], feature: list[float]) -> tuple[list, list]:
    edges, feats = [], []
    for u, v in pairs:
        edges.append((u, v))
        edges.append((v, u))
        feats.append(feature)
        feats.append(feature)
    return edges, feats


def encode_mkp(instance: MkpInstance, partial: PartialAssignment) -> FeatureGraph:
    """Graph over (free item, dimension) pairs.

    Node features: item index / n, dimension index / d, profit / max profit,
    weight / max weight, profit-to-weight ratio, weight over residual
    capacity.  Edges join nodes of the same item and nodes of the same
    dimension.

    Raises:
        Infeasible: the fixed-in items overrun some capacity.
    """
    partial.validate_for(instance)
    fixed_in = [j for j, v in partial.fixed_items() if v == 1]
    used = instance.weights[:, fixed_in].sum(axis=1) if fixed_in else np.zeros(instance.d, dtype=np.int64)
    residual = instance.capacities - used
    if (residual < 0).any():
        k = int(np.argmax(residual < 0))
        raise Infeasible(f"fixed items exceed capacity in dimension {k}")

    free = partial.free_indices()
    profit_scale = max(float(instance.profits.max()), 1.0)
    weight_scale = max(float(instance.weights.max()), 1.0)

    node_of: dict[tuple[int, int], int] = {}
    feats = []
    mult_map: dict[int, tuple] = {}
    for j in free:
        for k in range(instance.d):
            idx = len(feats)
            node_of[(j, k)] = idx
            w = float(instance.weights[k, j])
            p = float(instance.profits[j])
            feats.append([
                j / instance.n,
                k / instance.d,
                p / profit_scale,
                w / weight_scale,
                p / (w + 1.0),
                w / (float(residual[k]) + 1.0),
            ])
            if k >= 1:
                mult_map[idx] = (k - 1, j)

    pairs: list[tuple[int, int]] = []
    same_item: list[list[float]] = []
    for j in free:
        for k1 in range(instance.d):
            for k2 in range(k1 + 1, instance.d):
                pairs.append((node_of[(j, k1)], node_of[(j, k2)]))
    n_item_pairs = len(pairs)
    for k in range(instance.d):
        for a in range(len(free)):
            for b in range(a + 1, len(free)):
                pairs.append((node_of[(free[a], k)], node_of[(free[b], k)]))
    edges, efeats = [], []
    for idx, (u, v) in enumerate(pairs):
        feat = [1.0, 0.0] if idx < n_item_pairs else [0.0, 1.0]
        e2, f2 = _sym([(u, v)], feat)
        edges.extend(e2)
        efeats.extend(f2)

    return FeatureGraph(
        family="mkp",
        node_features=np.asarray(feats, dtype=np.float64).reshape(-1, MKP_NODE_FEATURES),
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        edge_features=np.asarray(efeats, dtype=np.float64).reshape(-1, EDGE_FEATURES),
        multiplier_map=mult_map,
        multiplier_shape=(instance.d - 1, instance.n),
        multiplier_scale=profit_scale,
    )


def _prefix_states(instance: SspInstance, partial: PartialAssignment) -> list[int]:
    """State of each automaton after consuming the fixed prefix."""
    head = [v for v in partial.values if v is not None]
    states = []
    for i, aut in enumerate(instance.automata):
        q = aut.initial
        for j, a in enumerate(head):
            nxt = aut.step(q, a)
            if nxt is None:
                raise Infeasible(f"prefix breaks automaton {i} at period {j}")
            q = nxt
        states.append(q)
    return states


def _reachable_layers(aut, start_state: int, depth: int, periods: int) -> np.ndarray:
    """Boolean (periods - depth + 1, Q): states reachable per remaining layer."""
    steps = periods - depth
    reach = np.zeros((steps + 1, aut.state_count), dtype=bool)
    reach[0, start_state] = True
    for j in range(steps):
        states = np.flatnonzero(reach[j])
        targets = aut.delta[states].ravel()
        targets = targets[targets >= 0]
        if targets.size:
            reach[j + 1, targets] = True
    return reach


def _coreachable_layers(aut, depth: int, periods: int) -> np.ndarray:
    """Boolean (periods - depth + 1, Q): states that still reach a final state."""
    steps = periods - depth
    core = np.zeros((steps + 1, aut.state_count), dtype=bool)
    for q in aut.finals:
        core[steps, q] = True
    for j in range(steps - 1, -1, -1):
        ok = (aut.delta >= 0) & core[j + 1][np.where(aut.delta >= 0, aut.delta, 0)]
        core[j] = ok.any(axis=1)
    return core


def encode_ssp(instance: SspInstance, partial: PartialAssignment) -> FeatureGraph:
    """Graph over (free period, constraint, activity) triples.

    Node features: period index / periods, constraint index / m, activity
    index / activities, profit / max profit.  Edges join nodes sharing a
    (period, activity) pair across constraints, and consecutive-period nodes
    of one constraint whose activities can follow each other from a state
    that is reachable after the fixed prefix.

    Raises:
        Infeasible: the prefix leaves some automaton without an accepting
        completion.
    """
    partial.validate_for(instance)
    depth = partial.depth
    m = len(instance.automata)
    n, acts = instance.periods, instance.activity_count
    start_states = _prefix_states(instance, partial)
    for i, aut in enumerate(instance.automata):
        core = _coreachable_layers(aut, depth, n)
        if not core[0, start_states[i]]:
            raise Infeasible(f"automaton {i} admits no accepting completion")

    profit_scale = max(float(instance.profits.max()), 1.0)
    feats = []
    mult_map: dict[int, tuple] = {}
    node_of: dict[tuple[int, int, int], int] = {}
    for j in range(depth, n):
        for i in range(m):
            for a in range(acts):
                idx = len(feats)
                node_of[(j, i, a)] = idx
                feats.append([j / n, i / m, a / acts, float(instance.profits[a, j]) / profit_scale])
                if i >= 1:
                    mult_map[idx] = (i - 1, j, a)

    edges: list[tuple[int, int]] = []
    efeats: list[list[float]] = []
    # Same (period, activity), different constraint.
    for j in range(depth, n):
        for a in range(acts):
            for i1 in range(m):
                for i2 in range(i1 + 1, m):
                    e2, f2 = _sym([(node_of[(j, i1, a)], node_of[(j, i2, a)])], [1.0, 0.0])
                    edges.extend(e2)
                    efeats.extend(f2)
    # Same constraint, consecutive periods, transition-compatible activities:
    # some state reachable at the earlier layer takes activity a to a state
    # where activity b is defined.
    for i, aut in enumerate(instance.automata):
        reach = _reachable_layers(aut, start_states[i], depth, n)
        any_out = (aut.delta >= 0).any(axis=1)  # state has some outgoing symbol
        for j in range(depth, n - 1):
            layer = np.flatnonzero(reach[j - depth])
            for a in range(acts):
                targets = aut.delta[layer, a]
                targets = targets[targets >= 0]
                if not targets.size:
                    continue
                # activities defined from any target state
                defined_next = (aut.delta[targets] >= 0).any(axis=0)
                for b in np.flatnonzero(defined_next):
                    e2, f2 = _sym([(node_of[(j, i, a)], node_of[(j + 1, i, int(b))])], [0.0, 1.0])
                    edges.extend(e2)
                    efeats.extend(f2)

    return FeatureGraph(
        family="ssp",
        node_features=np.asarray(feats, dtype=np.float64).reshape(-1, SSP_NODE_FEATURES),
        edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        edge_features=np.asarray(efeats, dtype=np.float64).reshape(-1, EDGE_FEATURES),
        multiplier_map=mult_map,
        multiplier_shape=(m - 1, n, acts),
        multiplier_scale=profit_scale,
    )


def encode_instance(instance: Instance, partial: PartialAssignment) -> FeatureGraph:
    if isinstance(instance, MkpInstance):
        return encode_mkp(instance, partial)
    return encode_ssp(instance, partial)


def dump_graph_json(graph: FeatureGraph, path: Union[str, Path]) -> None:
    """Debug dump of the full graph structure."""
    doc = {
        "family": graph.family,
        "num_nodes": graph.num_nodes,
        "node_features": graph.node_features.tolist(),
        "edges": graph.edges.tolist(),
        "edge_features": graph.edge_features.tolist(),
        "multiplier_map": {str(k): list(v) for k, v in graph.multiplier_map.items()},
        "multiplier_shape": list(graph.multiplier_shape),
        "multiplier_scale": graph.multiplier_scale,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")
