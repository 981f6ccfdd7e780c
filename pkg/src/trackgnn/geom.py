"""Tracker geometry, hit graphs and the layer-pair partition.

One z-sector of the inner tracker has four barrel layers (B1-B4) and seven
endcap disks (E1-E7).  Particles travel outwards, so a hit only connects to
the next barrel layer, to the first endcap disk, or (inside the endcap) to
the next disk.  That gives 13 legal ordered layer pairs, and a hit graph can
be split into 13 independent subgraphs, each touching exactly two of the 11
per-layer node groups.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import fxp
from .errors import DomainError, StructuralError, ValidationError


class LayerId(enum.IntEnum):
    B1 = 0
    B2 = 1
    B3 = 2
    B4 = 3
    E1 = 4
    E2 = 5
    E3 = 6
    E4 = 7
    E5 = 8
    E6 = 9
    E7 = 10

    @property
    def group_type(self) -> str:
        return "A" if self <= LayerId.B4 else "B"

    @property
    def is_barrel(self) -> bool:
        return self <= LayerId.B4

    @classmethod
    def parse(cls, label: str) -> "LayerId":
        try:
            return cls[label.strip()]
        except KeyError:
            raise DomainError(f"unknown layer label {label!r}") from None

    def __str__(self) -> str:
        return self.name


N_LAYERS = len(LayerId)
BARREL = tuple(LayerId(k) for k in range(4))
ENDCAP = tuple(LayerId(k) for k in range(4, 11))

Pair = tuple  # (inner LayerId, outer LayerId)


def legal_pairs() -> list[Pair]:
    """The 13 legal (inner, outer) layer pairs in canonical order."""
    pairs = [(BARREL[k], BARREL[k + 1]) for k in range(3)]
    pairs += [(b, LayerId.E1) for b in BARREL]
    pairs += [(ENDCAP[k], ENDCAP[k + 1]) for k in range(6)]
    return pairs


LEGAL_PAIRS: tuple = tuple(legal_pairs())
N_PAIRS = len(LEGAL_PAIRS)
PAIR_INDEX = {p: k for k, p in enumerate(LEGAL_PAIRS)}

# pair_lookup[inner, outer] -> canonical pair index, or -1 if illegal
_PAIR_LOOKUP = np.full((N_LAYERS, N_LAYERS), -1, dtype=np.int64)
for _k, (_a, _b) in enumerate(LEGAL_PAIRS):
    _PAIR_LOOKUP[_a, _b] = _k


def pair_type(pair: Pair) -> str:
    return f"{pair[0].group_type}-{pair[1].group_type}"


def pair_label(pair: Pair) -> str:
    return f"{pair[0].name}-{pair[1].name}"


def parse_pair(label: str) -> Pair:
    inner, sep, outer = label.partition("-")
    if not sep:
        raise DomainError(f"malformed layer pair {label!r}")
    pair = (LayerId.parse(inner), LayerId.parse(outer))
    if pair not in PAIR_INDEX:
        raise DomainError(f"{label!r} is not a legal layer pair")
    return pair


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def _as_matrix(a, n_cols: int | None, what: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 1 and a.size == 0:
        a = a.reshape(0, n_cols or 0)
    if a.ndim != 2:
        raise StructuralError(f"{what} must be a 2-D array, got shape {a.shape}")
    return fxp.check_raw(a, what)


@dataclass(frozen=True, eq=False)
class HitGraph:
    """Hits as nodes, candidate segments as directed edges.

    Features are raw Q7.7 words (``int64``).  ``node_layers`` holds
    :class:`LayerId` values; edge ``k`` runs from ``senders[k]`` to
    ``receivers[k]``.
    """

    node_features: np.ndarray
    node_layers: np.ndarray
    edge_features: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray

    def __post_init__(self):
        nf = _as_matrix(self.node_features, None, "node_features")
        ef = _as_matrix(self.edge_features, None, "edge_features")
        layers = np.asarray(self.node_layers, dtype=np.int64).reshape(-1)
        snd = np.asarray(self.senders, dtype=np.int64).reshape(-1)
        rcv = np.asarray(self.receivers, dtype=np.int64).reshape(-1)
        if layers.shape[0] != nf.shape[0]:
            raise StructuralError(
                f"{nf.shape[0]} node feature rows but {layers.shape[0]} layer labels")
        if not (snd.shape[0] == rcv.shape[0] == ef.shape[0]):
            raise StructuralError(
                f"edge arrays disagree: {ef.shape[0]} feature rows, "
                f"{snd.shape[0]} senders, {rcv.shape[0]} receivers")
        if layers.size and (layers.min() < 0 or layers.max() >= N_LAYERS):
            raise StructuralError("node_layers contains values outside the 11 layer ids")
        for name, arr in (("node_features", nf), ("node_layers", layers),
                          ("edge_features", ef), ("senders", snd), ("receivers", rcv)):
            object.__setattr__(self, name, _frozen(arr))

    @classmethod
    def empty(cls, d_node: int = 3, d_edge: int = 4) -> "HitGraph":
        return cls(np.zeros((0, d_node), np.int64), np.zeros(0, np.int64),
                   np.zeros((0, d_edge), np.int64), np.zeros(0, np.int64),
                   np.zeros(0, np.int64))

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edge_features.shape[0]

    @property
    def d_node(self) -> int:
        return self.node_features.shape[1]

    @property
    def d_edge(self) -> int:
        return self.edge_features.shape[1]

    def edge_pair_index(self) -> np.ndarray:
        """Canonical pair index of every edge (-1 for illegal pairs)."""
        return _PAIR_LOOKUP[self.node_layers[self.senders], self.node_layers[self.receivers]]

    def with_features(self, node_features=None, edge_features=None) -> "HitGraph":
        return HitGraph(
            self.node_features if node_features is None else node_features,
            self.node_layers,
            self.edge_features if edge_features is None else edge_features,
            self.senders, self.receivers)

    def equals(self, other: "HitGraph") -> bool:
        """Exact equality of every array, including shapes."""
        return all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self._arrays(), other._arrays()))

    def _arrays(self):
        return (self.node_features, self.node_layers, self.edge_features,
                self.senders, self.receivers)


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "index", "self-loop" or "illegal-pair"
    edge: int
    detail: str

    def __str__(self) -> str:
        return f"edge {self.edge}: {self.kind}: {self.detail}"


def validate(g: HitGraph) -> list[Diagnostic]:
    """Every out-of-range index, self-loop and illegal layer pair in ``g``."""
    report: list[Diagnostic] = []
    n = g.n_nodes
    for e in range(g.n_edges):
        s, r = int(g.senders[e]), int(g.receivers[e])
        bad = [f"{name} {v} not in [0, {n})"
               for name, v in (("sender", s), ("receiver", r)) if not 0 <= v < n]
        if bad:
            report.append(Diagnostic("index", e, "; ".join(bad)))
            continue
        if s == r:
            report.append(Diagnostic("self-loop", e, f"node {s} connects to itself"))
            continue
        pair = (LayerId(int(g.node_layers[s])), LayerId(int(g.node_layers[r])))
        if pair not in PAIR_INDEX:
            report.append(Diagnostic("illegal-pair", e, f"{pair[0].name}->{pair[1].name}"))
    return report


@dataclass(frozen=True, eq=False)
class NodeGroup:
    layer: LayerId
    node_ids: np.ndarray  # ascending global indices
    features: np.ndarray

    def __len__(self) -> int:
        return len(self.node_ids)


@dataclass(frozen=True, eq=False)
class EdgeGroup:
    pair: Pair
    edge_ids: np.ndarray  # ascending global indices
    senders: np.ndarray  # local indices into the inner node group
    receivers: np.ndarray  # local indices into the outer node group
    features: np.ndarray

    def __len__(self) -> int:
        return len(self.edge_ids)

    @property
    def index(self) -> int:
        return PAIR_INDEX[self.pair]

    @property
    def kind(self) -> str:
        return pair_type(self.pair)


@dataclass(frozen=True, eq=False)
class Partition:
    node_groups: tuple  # 11 NodeGroup, indexed by LayerId
    edge_groups: tuple  # 13 EdgeGroup, canonical pair order
    local_index: np.ndarray  # global node -> index inside its node group
    n_nodes: int
    n_edges: int
    d_node: int
    d_edge: int

    def group(self, layer: LayerId) -> NodeGroup:
        return self.node_groups[int(layer)]

    def node_array_capacity(self, k: int) -> int:
        """Nodes an edge-group PE must hold: the larger of its two node groups."""
        inner, outer = self.edge_groups[k].pair
        return max(len(self.group(inner)), len(self.group(outer)))

    def node_counts(self) -> dict:
        return {ng.layer: len(ng) for ng in self.node_groups}

    def edge_counts(self) -> dict:
        return {eg.pair: len(eg) for eg in self.edge_groups}


def partition(g: HitGraph) -> Partition:
    """Split ``g`` into 11 node groups and 13 edge-group subgraphs."""
    report = validate(g)
    if report:
        raise ValidationError(report)
    layers = g.node_layers
    local = np.zeros(g.n_nodes, dtype=np.int64)
    node_groups = []
    for layer in LayerId:
        ids = np.flatnonzero(layers == layer)
        local[ids] = np.arange(len(ids))
        node_groups.append(NodeGroup(layer, _frozen(ids), _frozen(g.node_features[ids])))
    pair_idx = g.edge_pair_index()
    edge_groups = []
    for k, pair in enumerate(LEGAL_PAIRS):
        ids = np.flatnonzero(pair_idx == k)
        edge_groups.append(EdgeGroup(
            pair, _frozen(ids),
            _frozen(local[g.senders[ids]]), _frozen(local[g.receivers[ids]]),
            _frozen(g.edge_features[ids])))
    return Partition(tuple(node_groups), tuple(edge_groups), _frozen(local),
                     g.n_nodes, g.n_edges, g.d_node, g.d_edge)


def reassemble(p: Partition) -> HitGraph:
    """Inverse of :func:`partition`."""
    nf = np.zeros((p.n_nodes, p.d_node), np.int64)
    layers = np.zeros(p.n_nodes, np.int64)
    for ng in p.node_groups:
        nf[ng.node_ids] = ng.features
        layers[ng.node_ids] = int(ng.layer)
    ef = np.zeros((p.n_edges, p.d_edge), np.int64)
    snd = np.zeros(p.n_edges, np.int64)
    rcv = np.zeros(p.n_edges, np.int64)
    for eg in p.edge_groups:
        inner, outer = (p.group(layer) for layer in eg.pair)
        ef[eg.edge_ids] = eg.features
        snd[eg.edge_ids] = inner.node_ids[eg.senders]
        rcv[eg.edge_ids] = outer.node_ids[eg.receivers]
    return HitGraph(nf, layers, ef, snd, rcv)


def merge_aggregates(partials: Sequence[np.ndarray], p: Partition) -> np.ndarray:
    """Combine per-edge-group receiver sums into one row per global node.

    ``partials[k]`` holds one row per node of edge group ``k``'s outer layer.
    Rows are added in canonical pair order; integer (raw Q7.7) partials use
    saturating addition, float partials plain addition.
    """
    if len(partials) != N_PAIRS:
        raise StructuralError(f"expected {N_PAIRS} partials, got {len(partials)}")
    arrays = [np.asarray(a) for a in partials]
    widths = {a.shape[1] for a in arrays if a.ndim == 2}
    if any(a.ndim != 2 for a in arrays) or len(widths) > 1:
        raise StructuralError("partials must be 2-D arrays of one common width")
    d = widths.pop()
    fixed = all(np.issubdtype(a.dtype, np.integer) for a in arrays)
    out = np.zeros((p.n_nodes, d), np.int64 if fixed else np.float64)
    for k, (eg, part) in enumerate(zip(p.edge_groups, arrays)):
        outer = p.group(eg.pair[1])
        if part.shape[0] != len(outer):
            raise StructuralError(
                f"partial {k} ({pair_label(eg.pair)}) has {part.shape[0]} rows, "
                f"node group {outer.layer.name} has {len(outer)}")
        rows = outer.node_ids
        if fixed:
            out[rows] = fxp.add_raw(out[rows], part)
        else:
            out[rows] = out[rows] + part
    return out


# -- raw hits ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HitTable:
    """Hits in cylindrical coordinates with a string layer label each."""

    r: np.ndarray
    phi: np.ndarray
    z: np.ndarray
    layer: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(c, dtype=np.float64).reshape(-1) for c in (self.r, self.phi, self.z)]
        lab = np.asarray(self.layer, dtype=str).reshape(-1)
        if not all(len(c) == len(lab) for c in cols):
            raise StructuralError("hit table columns differ in length")
        for name, arr in zip(("r", "phi", "z", "layer"), (*cols, lab)):
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.layer)

    def take(self, idx) -> "HitTable":
        return HitTable(self.r[idx], self.phi[idx], self.z[idx], self.layer[idx])


def sector_split(hits: HitTable) -> tuple[HitTable, HitTable]:
    """Split hits by the sign of z (z >= 0 first) and relabel endcap disks.

    Labels starting with ``B`` are barrel layers and keep their label.  Any
    other label names an endcap disk; within each sector the disks become
    E1..E7 in order of increasing median |z|.
    """
    if len(hits) and not np.all(np.isfinite(hits.z)):
        raise DomainError("every hit needs a finite z coordinate")
    sectors = []
    for mask in (hits.z >= 0, hits.z < 0):
        sub = hits.take(np.flatnonzero(mask))
        labels = sub.layer.copy()
        endcap = np.array([not s.startswith("B") for s in labels], dtype=bool)
        disks = sorted(set(labels[endcap]),
                       key=lambda d: (float(np.median(np.abs(sub.z[labels == d]))), d))
        if len(disks) > len(ENDCAP):
            raise DomainError(f"{len(disks)} endcap disks in one sector, at most 7 allowed")
        relabel = {d: ENDCAP[k].name for k, d in enumerate(disks)}
        for i in np.flatnonzero(endcap):
            labels[i] = relabel[labels[i]]
        for s in labels[~endcap]:
            LayerId.parse(s)
        sectors.append(HitTable(sub.r, sub.phi, sub.z, labels))
    return sectors[0], sectors[1]


def wrap_phi(dphi):
    return (np.asarray(dphi) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class WindowCut:
    """Accept a segment when |dphi| and |dz| both fall inside a window."""

    max_dphi: float = 0.1
    max_dz: float = 500.0

    def __call__(self, inner: HitTable, outer: HitTable) -> np.ndarray:
        dphi = wrap_phi(outer.phi[None, :] - inner.phi[:, None])
        dz = outer.z[None, :] - inner.z[:, None]
        return (np.abs(dphi) <= self.max_dphi) & (np.abs(dz) <= self.max_dz)


def accept_all(inner: HitTable, outer: HitTable) -> np.ndarray:
    return np.ones((len(inner), len(outer)), dtype=bool)


# r [mm], phi [rad], z [mm] -> roughly unit range before quantization
DEFAULT_SCALE = (1.0 / 1000.0, 1.0 / math.pi, 1.0 / 1000.0)


def _eta(r, z):
    theta = np.arctan2(r, z)
    return -np.log(np.tan(theta / 2.0))


def build_graph(hits: HitTable, cut: Callable | None = None,
                scale: tuple = DEFAULT_SCALE) -> HitGraph:
    """Connect every accepted (inner, outer) hit combination of each legal pair.

    Node features are the scaled (r, phi, z); edge features are the scaled
    (dr, dphi, dz) plus the angular distance sqrt(deta^2 + dphi^2).  Edges are
    listed pair by pair in canonical order, then by inner and outer hit index.
    """
    cut = WindowCut() if cut is None else cut
    layers = np.array([int(LayerId.parse(s)) for s in hits.layer], dtype=np.int64)
    sr, sphi, sz = scale
    nf = fxp.quantize_array(np.stack([hits.r * sr, hits.phi * sphi, hits.z * sz], axis=1)
                            if len(hits) else np.zeros((0, 3)))
    eta = _eta(hits.r, hits.z) if len(hits) else np.zeros(0)
    snd_parts, rcv_parts = [], []
    for inner, outer in LEGAL_PAIRS:
        ii = np.flatnonzero(layers == inner)
        oo = np.flatnonzero(layers == outer)
        if not (len(ii) and len(oo)):
            continue
        ok = np.asarray(cut(hits.take(ii), hits.take(oo)), dtype=bool)
        a, b = np.nonzero(ok)
        snd_parts.append(ii[a])
        rcv_parts.append(oo[b])
    snd = np.concatenate(snd_parts) if snd_parts else np.zeros(0, np.int64)
    rcv = np.concatenate(rcv_parts) if rcv_parts else np.zeros(0, np.int64)
    dphi = wrap_phi(hits.phi[rcv] - hits.phi[snd])
    deta = eta[rcv] - eta[snd]
    ef_real = np.stack([(hits.r[rcv] - hits.r[snd]) * sr, dphi * sphi,
                        (hits.z[rcv] - hits.z[snd]) * sz, np.hypot(deta, dphi)], axis=1)
    return HitGraph(nf, layers, fxp.quantize_array(ef_real.reshape(-1, 4)), snd, rcv)


def percentile_size(sizes: Sequence[tuple], p: float) -> tuple[int, int]:
    """Nearest-rank ``p``-th percentile of node and edge counts, per dimension."""
    if not len(sizes):
        raise DomainError("percentile of an empty dataset")
    if not 0 <= p <= 100:
        raise DomainError(f"percentile {p} outside [0, 100]")
    arr = np.asarray(sizes, dtype=np.int64).reshape(-1, 2)
    rank = max(1, math.ceil(p / 100.0 * len(arr)))
    return int(np.sort(arr[:, 0])[rank - 1]), int(np.sort(arr[:, 1])[rank - 1])
