"""Gated graph convolution network with hand-rolled reverse-mode gradients.

The network maps a feature graph to one multiplier per mapped node:

    h0      = P f_v                                (input projection)
    h^(l+1) = ReLU(W1 h_v + sum_u  g_vu * W2 [h_u || k_uv])   per layer
    g_vu    = sigmoid(W3 h_v + W4 [h_u || k_uv])              (edge gate)
    pooled  = mean_v sigmoid(h^L_v)
    out_v   = MLP_256_128_1(h^L_v || pooled)
    mu_v    = profit_scale * out_v                 (mapped nodes only)

Everything runs in float64 on numpy; the backward pass mirrors the forward
pass exactly, which the finite-difference tests lean on.  All operations are
sequential and deterministic.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .encoding import FeatureGraph
from .errors import FamilyMismatchError, ModelFormatError
from .lagrangian import Multipliers

__all__ = [
    "GnnParams",
    "AdamState",
    "ForwardCache",
    "init_params",
    "gnn_forward",
    "gnn_backward",
    "adam_step",
    "adam_state_for",
    "save_model",
    "load_model",
]

HIDDEN = 64
NUM_LAYERS = 2
HEAD_SIZES = (256, 128)
MODEL_FORMAT_VERSION = 1


def _param_shapes(feature_width: int, edge_width: int,
                  hidden: int = HIDDEN, layers: int = NUM_LAYERS,
                  head_sizes: tuple[int, ...] = HEAD_SIZES) -> dict[str, tuple[int, ...]]:
    """Canonical parameter order; serialization and Adam both follow it."""
    shapes: dict[str, tuple[int, ...]] = {
        "proj.w": (hidden, feature_width),
        "proj.b": (hidden,),
    }
    for l in range(layers):
        shapes[f"layer{l}.self_w"] = (hidden, hidden)
        shapes[f"layer{l}.self_b"] = (hidden,)
        shapes[f"layer{l}.msg_w"] = (hidden, hidden + edge_width)
        shapes[f"layer{l}.msg_b"] = (hidden,)
        shapes[f"layer{l}.gate_self_w"] = (hidden, hidden)
        shapes[f"layer{l}.gate_self_b"] = (hidden,)
        shapes[f"layer{l}.gate_msg_w"] = (hidden, hidden + edge_width)
        shapes[f"layer{l}.gate_msg_b"] = (hidden,)
    widths = (2 * hidden,) + tuple(head_sizes) + (1,)
    for i in range(len(widths) - 1):
        shapes[f"head.w{i}"] = (widths[i + 1], widths[i])
        shapes[f"head.b{i}"] = (widths[i + 1],)
    return shapes


@dataclass(frozen=True, eq=False)
class GnnParams:
    """All trainable weights, keyed by the canonical parameter names."""

    family: str
    feature_width: int
    edge_width: int
    tensors: dict[str, np.ndarray]
    hidden: int = HIDDEN
    layers: int = NUM_LAYERS
    head_sizes: tuple[int, ...] = HEAD_SIZES

    def __post_init__(self):
        expected = _param_shapes(self.feature_width, self.edge_width,
                                 self.hidden, self.layers, self.head_sizes)
        if list(self.tensors.keys()) != list(expected.keys()):
            raise ValueError("parameter names differ from the canonical set")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ValueError(f"{name} has shape {self.tensors[name].shape}, expected {shape}")
            if not np.isfinite(self.tensors[name]).all():
                raise ValueError(f"{name} contains non-finite values")

    @property
    def size(self) -> int:
        return sum(a.size for a in self.tensors.values())

    def with_tensors(self, tensors: dict[str, np.ndarray]) -> "GnnParams":
        return GnnParams(self.family, self.feature_width, self.edge_width, tensors,
                         self.hidden, self.layers, self.head_sizes)

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(a) for name, a in self.tensors.items()}


def init_params(family: str, feature_width: int, edge_width: int, seed: int = 0,
                hidden: int = HIDDEN, layers: int = NUM_LAYERS,
                head_sizes: tuple[int, ...] = HEAD_SIZES) -> GnnParams:
    """Fan-balanced uniform init for weights, zeros for biases.

    The output layer starts at zero so a fresh model predicts exactly zero
    multipliers: its initial bound equals the unpenalized decomposition
    bound, and training can only be judged against that baseline.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([0x6A19, seed])))
    last = f"head.w{len(head_sizes)}"
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _param_shapes(feature_width, edge_width, hidden, layers, head_sizes).items():
        if len(shape) == 1 or name == last:
            tensors[name] = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
    return GnnParams(family, feature_width, edge_width, tensors, hidden, layers, head_sizes)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class _LayerCache:
    h_in: np.ndarray  # (V, H)
    msg: np.ndarray  # (E, H) pre-gate messages
    gate: np.ndarray  # (E, H)
    pre_act: np.ndarray  # (V, H) before the ReLU


@dataclass
class ForwardCache:
    """Intermediates of one forward pass, consumed by gnn_backward."""

    graph: FeatureGraph
    param_sig: tuple
    layer_caches: list[_LayerCache]
    final_h: np.ndarray  # (V, H)
    node_sig: np.ndarray  # (V, H) sigmoid(final_h)
    head_in: np.ndarray  # (V, 2H)
    head_pre: list[np.ndarray]  # pre-activations of each head layer
    outputs: np.ndarray  # (V,) raw head outputs


def _signature(params: GnnParams) -> tuple:
    return (params.family, params.feature_width, params.edge_width,
            params.hidden, params.layers, params.head_sizes)


def gnn_forward(params: GnnParams, graph: FeatureGraph) -> tuple[Multipliers, ForwardCache]:
    """Predict one multiplier per mapped node.

    Raises:
        FamilyMismatchError: model and graph families differ.
        ValueError: feature widths disagree with the parameters.
    """
    if params.family != graph.family:
        raise FamilyMismatchError(f"{params.family} model applied to a {graph.family} graph")
    if graph.node_width != params.feature_width or graph.edge_width != params.edge_width:
        raise ValueError(
            f"graph widths ({graph.node_width}, {graph.edge_width}) do not match "
            f"model ({params.feature_width}, {params.edge_width})"
        )
    t = params.tensors
    num_nodes = graph.num_nodes
    src = graph.edges[:, 0]
    dst = graph.edges[:, 1]

    h = graph.node_features @ t["proj.w"].T + t["proj.b"]
    layer_caches = []
    for l in range(params.layers):
        u = np.concatenate([h[src], graph.edge_features], axis=1)  # (E, H+q)
        self_term = h @ t[f"layer{l}.self_w"].T + t[f"layer{l}.self_b"]
        gate_self = h @ t[f"layer{l}.gate_self_w"].T + t[f"layer{l}.gate_self_b"]
        msg = u @ t[f"layer{l}.msg_w"].T + t[f"layer{l}.msg_b"]
        gate = _sigmoid(gate_self[dst] + u @ t[f"layer{l}.gate_msg_w"].T + t[f"layer{l}.gate_msg_b"])
        agg = np.zeros_like(h)
        np.add.at(agg, dst, gate * msg)
        pre = self_term + agg
        layer_caches.append(_LayerCache(h_in=h, msg=msg, gate=gate, pre_act=pre))
        h = np.maximum(pre, 0.0)

    node_sig = _sigmoid(h)
    pooled = node_sig.mean(axis=0) if num_nodes else np.zeros(params.hidden)
    head_in = np.concatenate([h, np.broadcast_to(pooled, h.shape)], axis=1)

    act = head_in
    head_pre = []
    n_head = len(params.head_sizes) + 1
    for i in range(n_head):
        pre = act @ t[f"head.w{i}"].T + t[f"head.b{i}"]
        head_pre.append(pre)
        act = np.maximum(pre, 0.0) if i < n_head - 1 else pre
    outputs = act[:, 0]

    values = np.zeros(graph.multiplier_shape)
    for node, coord in graph.multiplier_map.items():
        values[coord] = graph.multiplier_scale * outputs[node]
    cache = ForwardCache(graph=graph, param_sig=_signature(params),
                         layer_caches=layer_caches, final_h=h, node_sig=node_sig,
                         head_in=head_in, head_pre=head_pre, outputs=outputs)
    return Multipliers(graph.family, values), cache


def gnn_backward(params: GnnParams, cache: ForwardCache,
                 d_mu: Union[Multipliers, np.ndarray]) -> dict[str, np.ndarray]:
    """Exact gradients of sum(d_mu * mu) with respect to every parameter.

    ``d_mu`` is shaped like the multiplier array; coordinates without a graph
    node are ignored.

    Raises:
        ValueError: the cache was built by differently-shaped parameters.
    """
    if cache.param_sig != _signature(params):
        raise ValueError("stale cache: parameter layout changed since the forward pass")
    graph = cache.graph
    d_values = d_mu.values if isinstance(d_mu, Multipliers) else np.asarray(d_mu, dtype=np.float64)
    if d_values.shape != graph.multiplier_shape:
        raise ValueError(f"upstream gradient shape {d_values.shape}, expected {graph.multiplier_shape}")
    t = params.tensors
    grads = params.zero_grads()
    num_nodes = graph.num_nodes
    src = graph.edges[:, 0]
    dst = graph.edges[:, 1]

    d_out = np.zeros(num_nodes)
    for node, coord in graph.multiplier_map.items():
        d_out[node] = graph.multiplier_scale * d_values[coord]

    # Head MLP.
    n_head = len(params.head_sizes) + 1
    d_act = d_out[:, None]
    for i in range(n_head - 1, -1, -1):
        d_pre = d_act if i == n_head - 1 else d_act * (cache.head_pre[i] > 0)
        layer_in = cache.head_in if i == 0 else np.maximum(cache.head_pre[i - 1], 0.0)
        grads[f"head.w{i}"] += d_pre.T @ layer_in
        grads[f"head.b{i}"] += d_pre.sum(axis=0)
        d_act = d_pre @ t[f"head.w{i}"]
    d_head_in = d_act  # (V, 2H)

    hidden = params.hidden
    d_h = d_head_in[:, :hidden].copy()
    # Pooling: every node receives the mean-gradient through its sigmoid.
    d_pooled = d_head_in[:, hidden:].sum(axis=0)
    if num_nodes:
        d_h += (cache.node_sig * (1.0 - cache.node_sig)) * (d_pooled / num_nodes)

    for l in range(params.layers - 1, -1, -1):
        lc = cache.layer_caches[l]
        u = np.concatenate([lc.h_in[src], graph.edge_features], axis=1)
        d_pre = d_h * (lc.pre_act > 0)  # (V, H)
        grads[f"layer{l}.self_w"] += d_pre.T @ lc.h_in
        grads[f"layer{l}.self_b"] += d_pre.sum(axis=0)
        d_h_in = d_pre @ t[f"layer{l}.self_w"]

        d_agg = d_pre[dst]  # (E, H)
        d_msg = d_agg * lc.gate
        d_gate = d_agg * lc.msg
        d_gate_pre = d_gate * lc.gate * (1.0 - lc.gate)

        grads[f"layer{l}.msg_w"] += d_msg.T @ u
        grads[f"layer{l}.msg_b"] += d_msg.sum(axis=0)
        d_u = d_msg @ t[f"layer{l}.msg_w"]

        grads[f"layer{l}.gate_msg_w"] += d_gate_pre.T @ u
        grads[f"layer{l}.gate_msg_b"] += d_gate_pre.sum(axis=0)
        d_u += d_gate_pre @ t[f"layer{l}.gate_msg_w"]

        d_gate_self = np.zeros_like(lc.h_in)
        np.add.at(d_gate_self, dst, d_gate_pre)
        grads[f"layer{l}.gate_self_w"] += d_gate_self.T @ lc.h_in
        grads[f"layer{l}.gate_self_b"] += d_gate_self.sum(axis=0)
        d_h_in += d_gate_self @ t[f"layer{l}.gate_self_w"]

        np.add.at(d_h_in, src, d_u[:, :hidden])
        d_h = d_h_in

    grads["proj.w"] += d_h.T @ graph.node_features
    grads["proj.b"] += d_h.sum(axis=0)
    return grads


@dataclass
class AdamState:
    """First and second moment accumulators plus the step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def adam_state_for(params: GnnParams) -> AdamState:
    return AdamState(m=params.zero_grads(), v=params.zero_grads(), t=0)


def adam_step(params: GnnParams, grads: dict[str, np.ndarray], state: AdamState,
              lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[GnnParams, AdamState]:
    """One Adam update; returns fresh parameters and state."""
    t = state.t + 1
    new_tensors, new_m, new_v = {}, {}, {}
    for name, p in params.tensors.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_tensors[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return params.with_tensors(new_tensors), AdamState(new_m, new_v, t)


def save_model(params: GnnParams, meta: dict, path: Union[str, Path]) -> None:
    """Single-file container: length-prefixed JSON header, then float64 payload."""
    header = {
        "version": MODEL_FORMAT_VERSION,
        "family": params.family,
        "feature_width": params.feature_width,
        "edge_width": params.edge_width,
        "hidden": params.hidden,
        "layers": params.layers,
        "head_sizes": list(params.head_sizes),
        "meta": meta,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in params.tensors.items()],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in params.tensors.values():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path: Union[str, Path]) -> tuple[GnnParams, dict]:
    """Inverse of save_model.

    Raises:
        ModelFormatError: bad magic, unsupported version, or truncated payload.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise ModelFormatError(f"{path}: too short for a header")
    (header_len,) = struct.unpack("<I", raw[:4])
    if len(raw) < 4 + header_len:
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[4:4 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header: {exc}") from None
    version = header.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version!r}")
    payload = raw[4 + header_len:]
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(payload):
            raise ModelFormatError(f"{path}: truncated tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(
            payload, dtype="<f8", count=count, offset=offset
        ).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(payload):
        raise ModelFormatError(f"{path}: {len(payload) - offset} trailing payload bytes")
    try:
        params = GnnParams(
            family=header["family"],
            feature_width=int(header["feature_width"]),
            edge_width=int(header["edge_width"]),
            tensors=tensors,
            hidden=int(header["hidden"]),
            layers=int(header["layers"]),
            head_sizes=tuple(header["head_sizes"]),
        )
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"{path}: inconsistent header: {exc}") from None
    return params, header.get("meta", {})
