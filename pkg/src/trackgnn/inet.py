"""Interaction-network inference for edge classification.

One message-passing step is Edgeblock -> Aggregate -> Nodeblock:

* every edge ``(i, j)`` is re-embedded by ``MLP_edge([x_i, x_j, e_ij])``;
* the new edge features are summed into their receiver nodes;
* every node is re-embedded by ``MLP_node([x_v, agg_v])``.

After the configured number of steps each edge is scored by
``hard_sigmoid(MLP_cls([x_i, x_j, e_ij]))``.

Two arithmetic modes share one code path.  ``"fixed"`` works on raw Q7.7
words with saturating, round-to-nearest-even arithmetic; dot products add
their rounded products in ascending input order and then the bias.
``"real"`` uses float64 and the unquantized weights.

Accumulation order is part of the contract.  Receiver sums are formed per
layer-pair edge group (ascending edge id inside a group) and the group
partials are then added in canonical pair order.  This is the order in which
the partitioned pipeline combines its partial sums, so :func:`infer` and
:func:`infer_partitioned` agree bit for bit even when additions saturate.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fxp, kernels
from .errors import DomainError, StructuralError, ValidationError
from .geom import N_PAIRS, HitGraph, Partition, merge_aggregates, validate

MODES = ("real", "fixed")


@dataclass(frozen=True)
class InferConfig:
    d_node: int = 3
    d_edge: int = 4
    hidden: int = 8
    depth: int = 2
    iterations: int = 1
    mode: str = "fixed"

    def __post_init__(self):
        if min(self.d_node, self.d_edge, self.hidden) < 1:
            raise DomainError("dimensions must be at least 1")
        if self.depth < 0:
            raise DomainError("hidden depth must be non-negative")
        if self.iterations < 1:
            raise DomainError("at least one message-passing iteration is required")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}, got {self.mode!r}")

    def mlp_shapes(self) -> dict:
        """Layer widths of the three MLPs, input first."""
        mid = [self.hidden] * self.depth
        return {
            "edge": [2 * self.d_node + self.d_edge, *mid, self.d_edge],
            "node": [self.d_node + self.d_edge, *mid, self.d_node],
            "classifier": [2 * self.d_node + self.d_edge, *mid, 1],
        }


@dataclass(frozen=True, eq=False)
class Dense:
    """One affine layer, kept both as reals and as quantized raw words."""

    weight: np.ndarray  # (n_in, n_out) float64
    bias: np.ndarray  # (n_out,) float64
    weight_raw: np.ndarray = field(default=None)
    bias_raw: np.ndarray = field(default=None)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or w.shape[1] != b.shape[0]:
            raise StructuralError(f"weight {w.shape} does not match bias {b.shape}")
        wq = fxp.quantize_array(w)
        bq = fxp.quantize_array(b)
        for name, given, expect in (("weight_raw", self.weight_raw, wq),
                                    ("bias_raw", self.bias_raw, bq)):
            if given is not None and not np.array_equal(np.asarray(given), expect):
                raise StructuralError(f"{name} is not the quantization of the real values")
        for name, arr in (("weight", w), ("bias", b), ("weight_raw", wq), ("bias_raw", bq)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_raw(cls, weight_raw, bias_raw) -> "Dense":
        return cls(fxp.to_float(weight_raw), fxp.to_float(bias_raw))

    @property
    def shape(self) -> tuple:
        return self.weight.shape


class MLP(tuple):
    """Sequence of :class:`Dense` layers; ReLU between layers, none after the last."""

    def __new__(cls, layers):
        layers = tuple(layers)
        if not layers:
            raise StructuralError("an MLP needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.shape[1] != b.shape[0]:
                raise StructuralError(f"layer widths do not chain: {a.shape} -> {b.shape}")
        return super().__new__(cls, layers)

    @property
    def n_in(self) -> int:
        return self[0].shape[0]

    @property
    def n_out(self) -> int:
        return self[-1].shape[1]

    def __call__(self, x: np.ndarray, fixed: bool) -> np.ndarray:
        if x.shape[1] != self.n_in:
            raise StructuralError(f"MLP expects {self.n_in} inputs, got {x.shape[1]}")
        last = len(self) - 1
        for k, layer in enumerate(self):
            if fixed:
                x = kernels.dense_sat(x, layer.weight_raw, layer.bias_raw)
                if k < last:
                    x = fxp.relu_raw(x)
            else:
                x = x @ layer.weight + layer.bias
                if k < last:
                    x = np.maximum(x, 0.0)
        return x

    def n_weights(self) -> int:
        return sum(layer.weight.size for layer in self)

    def n_params(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self)


@dataclass(frozen=True, eq=False)
class ModelParams:
    edge_mlp: MLP
    node_mlp: MLP
    classifier_mlp: MLP

    def __post_init__(self):
        for name in ("edge_mlp", "node_mlp", "classifier_mlp"):
            value = getattr(self, name)
            if not isinstance(value, MLP):
                object.__setattr__(self, name, MLP(value))
        d_edge = self.edge_mlp.n_out
        d_node = self.node_mlp.n_out
        expect = {
            "edge_mlp": 2 * d_node + d_edge,
            "node_mlp": d_node + d_edge,
            "classifier_mlp": 2 * d_node + d_edge,
        }
        for name, n_in in expect.items():
            if getattr(self, name).n_in != n_in:
                raise StructuralError(
                    f"{name} takes {getattr(self, name).n_in} inputs, expected {n_in} "
                    f"for d_node={d_node}, d_edge={d_edge}")
        if self.classifier_mlp.n_out != 1:
            raise StructuralError("classifier_mlp must produce one output")

    @property
    def d_node(self) -> int:
        return self.node_mlp.n_out

    @property
    def d_edge(self) -> int:
        return self.edge_mlp.n_out

    def mlps(self) -> dict:
        return {"edge": self.edge_mlp, "node": self.node_mlp, "classifier": self.classifier_mlp}


def random_params(cfg: InferConfig, rng: np.random.Generator,
                  low: float = -1.0, high: float = 1.0, fan_in: bool = False) -> ModelParams:
    """Weights and biases drawn uniformly from ``[low, high]``.

    Full-range draws at the default dimensions drive hidden activations
    into Q7.7 saturation, so fixed and real scores can differ by up to 1.
    ``fan_in`` divides each layer's draws by sqrt(inputs); activations
    then stay small and scores cluster tightly around 0.5.
    """
    mlps = {}
    for name, widths in cfg.mlp_shapes().items():
        layers = []
        for a, b in zip(widths, widths[1:]):
            s = 1.0 / np.sqrt(a) if fan_in else 1.0
            layers.append(Dense(s * rng.uniform(low, high, (a, b)), s * rng.uniform(low, high, b)))
        mlps[name] = MLP(layers)
    return ModelParams(mlps["edge"], mlps["node"], mlps["classifier"])


# -- graph state ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GraphState:
    """Features of a graph during inference: raw words (fixed) or float64 (real)."""

    nodes: np.ndarray
    edges: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    edge_pair: np.ndarray  # canonical pair index per edge

    @property
    def fixed(self) -> bool:
        return np.issubdtype(self.nodes.dtype, np.integer)


def as_state(g: HitGraph, mode: str = "fixed") -> GraphState:
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "fixed":
        nodes, edges = g.node_features.astype(np.int64), g.edge_features.astype(np.int64)
    else:
        nodes, edges = fxp.to_float(g.node_features), fxp.to_float(g.edge_features)
    return GraphState(nodes, edges, g.senders, g.receivers, g.edge_pair_index())


def _state(g, mode):
    return g if isinstance(g, GraphState) else as_state(g, mode)


def _check_dims(s: GraphState, params: ModelParams):
    if s.nodes.shape[1] != params.d_node or s.edges.shape[1] != params.d_edge:
        raise StructuralError(
            f"graph has d_node={s.nodes.shape[1]}, d_edge={s.edges.shape[1]}; "
            f"params expect d_node={params.d_node}, d_edge={params.d_edge}")


def _edge_inputs(s: GraphState) -> np.ndarray:
    return np.concatenate([s.nodes[s.senders], s.nodes[s.receivers], s.edges], axis=1)


def edge_block(g, params: ModelParams, mode: str = "fixed") -> np.ndarray:
    """Updated edge features, one row per edge."""
    s = _state(g, mode)
    _check_dims(s, params)
    return params.edge_mlp(_edge_inputs(s), s.fixed)


def aggregate(edge_feats: np.ndarray, receivers, n_nodes: int) -> np.ndarray:
    """Sum edge rows into their receiver nodes in ascending edge order.

    Integer input is treated as raw Q7.7 words and summed with saturation;
    float input is summed in float64.
    """
    edge_feats = np.asarray(edge_feats)
    receivers = np.asarray(receivers, dtype=np.int64).reshape(-1)
    if edge_feats.ndim != 2 or edge_feats.shape[0] != receivers.shape[0]:
        raise StructuralError(
            f"{edge_feats.shape} edge features for {receivers.shape[0]} receivers")
    if receivers.size and (receivers.min() < 0 or receivers.max() >= n_nodes):
        raise StructuralError(f"receiver index outside [0, {n_nodes})")
    if np.issubdtype(edge_feats.dtype, np.integer):
        return kernels.scatter_add_sat(edge_feats, receivers, n_nodes)
    out = np.zeros((n_nodes, edge_feats.shape[1]), np.float64)
    np.add.at(out, receivers, edge_feats.astype(np.float64))
    return out


def aggregate_canonical(edge_feats: np.ndarray, receivers, n_nodes: int,
                        edge_pair) -> np.ndarray:
    """Two-level receiver sum: per edge group, then groups in canonical order."""
    edge_pair = np.asarray(edge_pair, dtype=np.int64)
    fixed = np.issubdtype(np.asarray(edge_feats).dtype, np.integer)
    out = np.zeros((n_nodes, edge_feats.shape[1]), np.int64 if fixed else np.float64)
    for k in range(N_PAIRS):
        sel = np.flatnonzero(edge_pair == k)
        if not sel.size:
            continue
        part = aggregate(edge_feats[sel], receivers[sel], n_nodes)
        out = fxp.add_raw(out, part) if fixed else out + part
    return out


def node_block(g, aggregated: np.ndarray, params: ModelParams,
               mode: str = "fixed") -> np.ndarray:
    """Updated node features, one row per node."""
    s = _state(g, mode)
    _check_dims(s, params)
    aggregated = np.asarray(aggregated)
    if aggregated.shape != (s.nodes.shape[0], params.d_edge):
        raise StructuralError(
            f"aggregated shape {aggregated.shape}, expected {(s.nodes.shape[0], params.d_edge)}")
    return params.node_mlp(np.concatenate([s.nodes, aggregated], axis=1), s.fixed)


def _squash(logits: np.ndarray, fixed: bool) -> np.ndarray:
    if fixed:
        return fxp.to_float(fxp.hard_sigmoid_raw(logits))
    return np.clip(0.125 * logits + 0.5, 0.0, 1.0)


def classify_edges(g, params: ModelParams, mode: str = "fixed") -> np.ndarray:
    """Edge scores in [0, 1]."""
    s = _state(g, mode)
    _check_dims(s, params)
    return _squash(params.classifier_mlp(_edge_inputs(s), s.fixed), s.fixed)[:, 0]


def _check_graph(g: HitGraph, params: ModelParams):
    report = validate(g)
    if report:
        raise ValidationError(report)
    if g.d_node != params.d_node or g.d_edge != params.d_edge:
        raise StructuralError(
            f"graph has d_node={g.d_node}, d_edge={g.d_edge}; "
            f"params expect d_node={params.d_node}, d_edge={params.d_edge}")


def _check_cfg(cfg: InferConfig, params: ModelParams):
    if (cfg.d_node, cfg.d_edge) != (params.d_node, params.d_edge):
        raise StructuralError("InferConfig dimensions disagree with the model parameters")


def infer(g: HitGraph, params: ModelParams, cfg: InferConfig = InferConfig()) -> np.ndarray:
    """Edge scores for the whole graph."""
    _check_graph(g, params)
    _check_cfg(cfg, params)
    s = as_state(g, cfg.mode)
    for _ in range(cfg.iterations):
        edges = edge_block(s, params)
        agg = aggregate_canonical(edges, s.receivers, s.nodes.shape[0], s.edge_pair)
        s = GraphState(s.nodes, edges, s.senders, s.receivers, s.edge_pair)
        s = GraphState(node_block(s, agg, params), edges, s.senders, s.receivers, s.edge_pair)
    return classify_edges(s, params)


def infer_partitioned(p: Partition, params: ModelParams,
                      cfg: InferConfig = InferConfig()) -> np.ndarray:
    """Edge scores computed group by group, returned in global edge order."""
    if (p.d_node, p.d_edge) != (params.d_node, params.d_edge):
        raise StructuralError(
            f"partition has d_node={p.d_node}, d_edge={p.d_edge}; "
            f"params expect d_node={params.d_node}, d_edge={params.d_edge}")
    _check_cfg(cfg, params)
    fixed = cfg.mode == "fixed"
    conv = (lambda a: a.astype(np.int64)) if fixed else fxp.to_float
    nodes = [conv(ng.features) for ng in p.node_groups]
    edges = [conv(eg.features) for eg in p.edge_groups]

    def group_inputs(k):
        eg = p.edge_groups[k]
        inner, outer = (int(layer) for layer in eg.pair)
        return np.concatenate([nodes[inner][eg.senders], nodes[outer][eg.receivers],
                               edges[k]], axis=1)

    for _ in range(cfg.iterations):
        edges = [params.edge_mlp(group_inputs(k), fixed) for k in range(N_PAIRS)]
        partials = [aggregate(edges[k], eg.receivers, len(p.group(eg.pair[1])))
                    for k, eg in enumerate(p.edge_groups)]
        agg = merge_aggregates(partials, p)
        nodes = [params.node_mlp(np.concatenate([nodes[int(ng.layer)], agg[ng.node_ids]],
                                                axis=1), fixed)
                 for ng in p.node_groups]
    scores = np.zeros(p.n_edges, np.float64)
    for k, eg in enumerate(p.edge_groups):
        if len(eg):
            scores[eg.edge_ids] = _squash(params.classifier_mlp(group_inputs(k), fixed),
                                          fixed)[:, 0]
    return scores
