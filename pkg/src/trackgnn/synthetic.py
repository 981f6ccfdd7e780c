"""Synthetic hit graphs with prescribed per-layer and per-pair occupancy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fxp
from .errors import DomainError
from .geom import LEGAL_PAIRS, HitGraph, LayerId, pair_type

NOMINAL_NODES = 739
NOMINAL_EDGES = 1252
# representative per-group sizes by group type
TYPE_NODE_SIZES = {"A": 138, "B": 62}
TYPE_EDGE_SIZES = {"A-A": 277, "A-B": 77, "B-B": 87}


@dataclass(frozen=True)
class Profile:
    node_counts: dict  # LayerId -> int
    edge_counts: dict  # (LayerId, LayerId) -> int

    def __post_init__(self):
        nodes = {LayerId(k): int(self.node_counts.get(LayerId(k), 0)) for k in LayerId}
        edges = {p: int(self.edge_counts.get(p, 0)) for p in LEGAL_PAIRS}
        extra = set(self.edge_counts) - set(LEGAL_PAIRS)
        if extra:
            raise DomainError(f"profile names illegal layer pairs: {sorted(extra)}")
        if min(nodes.values()) < 0 or min(edges.values()) < 0:
            raise DomainError("profile counts must be non-negative")
        for (a, b), m in edges.items():
            if m > nodes[a] * nodes[b]:
                raise DomainError(
                    f"{m} edges requested between {a.name} ({nodes[a]} hits) "
                    f"and {b.name} ({nodes[b]} hits)")
        object.__setattr__(self, "node_counts", nodes)
        object.__setattr__(self, "edge_counts", edges)

    @property
    def n_nodes(self) -> int:
        return sum(self.node_counts.values())

    @property
    def n_edges(self) -> int:
        return sum(self.edge_counts.values())


def apportion(total: int, weights) -> list[int]:
    """Largest-remainder split of ``total`` in proportion to ``weights``."""
    w = np.asarray(weights, dtype=np.float64)
    if total == 0 or w.sum() == 0:
        return [0] * len(w)
    quota = total * w / w.sum()
    base = np.floor(quota).astype(np.int64)
    left = total - int(base.sum())
    # stable sort keeps canonical order among equal remainders
    order = np.argsort(-(quota - base), kind="stable")
    base[order[:left]] += 1
    return [int(v) for v in base]


def default_profile(n_nodes: int = NOMINAL_NODES, n_edges: int = NOMINAL_EDGES) -> Profile:
    """Occupancy scaled to the nominal graph in the per-type size ratios."""
    layers = list(LayerId)
    nodes = apportion(n_nodes, [TYPE_NODE_SIZES[layer.group_type] for layer in layers])
    edges = apportion(n_edges, [TYPE_EDGE_SIZES[pair_type(p)] for p in LEGAL_PAIRS])
    return Profile(dict(zip(layers, nodes)), dict(zip(LEGAL_PAIRS, edges)))


def random_profile(rng: np.random.Generator, n_nodes: int, n_edges: int) -> Profile:
    """Random occupancy with about ``n_edges`` edges (fewer if the layers cannot hold them)."""
    layers = list(LayerId)
    w = np.array([TYPE_NODE_SIZES[layer.group_type] for layer in layers], np.float64)
    nodes = rng.multinomial(n_nodes, w / w.sum())
    cap = np.array([nodes[a] * nodes[b] for a, b in LEGAL_PAIRS], np.float64)
    edges = np.zeros(len(LEGAL_PAIRS), np.int64)
    if cap.sum() > 0 and n_edges > 0:
        edges = np.minimum(rng.multinomial(n_edges, cap / cap.sum()), cap.astype(np.int64))
    return Profile(dict(zip(layers, nodes.tolist())), dict(zip(LEGAL_PAIRS, edges.tolist())))


def generate_synthetic(seed: int, profile: Profile | None = None, d_node: int = 3,
                       d_edge: int = 4, low: float = -1.0, high: float = 1.0) -> HitGraph:
    """Random legal graph whose layer and pair occupancies equal ``profile``.

    Nodes and edges appear in shuffled order; features are uniform in
    ``[low, high]`` before quantization.
    """
    profile = default_profile() if profile is None else profile
    rng = np.random.default_rng(seed)
    n = profile.n_nodes
    layers = np.repeat(np.arange(len(LayerId)), [profile.node_counts[k] for k in LayerId])
    perm = rng.permutation(n)
    node_layers = np.empty(n, np.int64)
    node_layers[perm] = layers
    snd_parts, rcv_parts = [], []
    for pair in LEGAL_PAIRS:
        m = profile.edge_counts[pair]
        if not m:
            continue
        inner = np.flatnonzero(node_layers == pair[0])
        outer = np.flatnonzero(node_layers == pair[1])
        flat = rng.choice(len(inner) * len(outer), size=m, replace=False)
        snd_parts.append(inner[flat // len(outer)])
        rcv_parts.append(outer[flat % len(outer)])
    snd = np.concatenate(snd_parts) if snd_parts else np.zeros(0, np.int64)
    rcv = np.concatenate(rcv_parts) if rcv_parts else np.zeros(0, np.int64)
    order = rng.permutation(len(snd))
    nf = fxp.quantize_array(rng.uniform(low, high, (n, d_node)))
    ef = fxp.quantize_array(rng.uniform(low, high, (len(snd), d_edge)))
    return HitGraph(nf, node_layers, ef, snd[order], rcv[order])


def random_graph(rng: np.random.Generator, n_nodes: int, n_edges: int | None = None,
                 **kwargs) -> HitGraph:
    """Random legal graph of ``n_nodes`` nodes; edges default to about 1.7 per node."""
    if n_edges is None:
        n_edges = int(round(n_nodes * NOMINAL_EDGES / NOMINAL_NODES))
    profile = random_profile(rng, n_nodes, n_edges)
    return generate_synthetic(int(rng.integers(2**32)), profile, **kwargs)
