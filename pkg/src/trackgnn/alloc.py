"""Processing-element allocation and a first-order memory/DSP estimate.

Three architecture variants are modelled:

``mpa``
    P identical system PEs, each holding a node array for the whole graph.
``geo``
    one PE per layer-pair edge group and per layer node group.
``geo-rsrc``
    like ``geo`` but each group gets PEs in proportion to its workload.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StructuralError
from .fxp import WORD_BITS
from .geom import LEGAL_PAIRS, HitGraph, LayerId, Partition, pair_label, pair_type

VARIANTS = ("mpa", "geo", "geo-rsrc")
ALL = "all"  # group key of the single lane in the uniform architecture

BLOCK_BITS = 36 * 1024
HALF_BLOCK_BITS = BLOCK_BITS // 2
# FIFOs up to this many bits are assumed to map to shift registers, not block RAM
SRL_FIFO_BITS = 1024


def check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise DomainError(f"variant must be one of {VARIANTS}, got {variant!r}")
    return variant


@dataclass(frozen=True)
class GroupWorkload:
    group: object  # LayerId for node groups, (LayerId, LayerId) for edge groups
    kind: str  # "node" or "edge"
    group_type: str  # A, B, A-A, A-B or B-B
    size: int

    def __post_init__(self):
        if self.size < 0:
            raise DomainError(f"negative workload {self.size} for {self.label}")
        expect = self.group.group_type if self.kind == "node" else pair_type(self.group)
        if self.group_type != expect:
            raise DomainError(f"{self.label} has type {expect}, not {self.group_type}")

    @property
    def label(self) -> str:
        return self.group.name if self.kind == "node" else pair_label(self.group)


@dataclass(frozen=True)
class Workload:
    """Per-group element counts of one graph (or of a nominal graph)."""

    node_counts: dict  # LayerId -> int
    edge_counts: dict  # pair -> int
    max_in_degree: int = 1

    def __post_init__(self):
        nodes = {layer: int(self.node_counts.get(layer, 0)) for layer in LayerId}
        edges = {p: int(self.edge_counts.get(p, 0)) for p in LEGAL_PAIRS}
        if min(nodes.values()) < 0 or min(edges.values()) < 0 or self.max_in_degree < 0:
            raise DomainError("workload counts must be non-negative")
        object.__setattr__(self, "node_counts", nodes)
        object.__setattr__(self, "edge_counts", edges)

    @property
    def n_nodes(self) -> int:
        return sum(self.node_counts.values())

    @property
    def n_edges(self) -> int:
        return sum(self.edge_counts.values())

    @classmethod
    def from_graph(cls, g: HitGraph) -> "Workload":
        pair_idx = g.edge_pair_index()
        nodes = np.bincount(g.node_layers, minlength=len(LayerId))
        edges = np.bincount(pair_idx[pair_idx >= 0], minlength=len(LEGAL_PAIRS))
        indeg = np.bincount(g.receivers, minlength=1).max() if g.n_edges else 0
        return cls(dict(zip(LayerId, nodes.tolist())), dict(zip(LEGAL_PAIRS, edges.tolist())),
                   int(indeg))

    @classmethod
    def from_partition(cls, p: Partition) -> "Workload":
        indeg = 0
        for ng in p.node_groups:
            counts = np.zeros(len(ng), np.int64)
            for eg in p.edge_groups:
                if eg.pair[1] == ng.layer:
                    counts += np.bincount(eg.receivers, minlength=len(ng))
            indeg = max(indeg, int(counts.max()) if len(ng) else 0)
        return cls(p.node_counts(), p.edge_counts(), indeg)

    @classmethod
    def nominal(cls) -> "Workload":
        """The nominal 739-node / 1252-edge graph of the default synthetic profile."""
        return _nominal_workload()

    def groups(self) -> list[GroupWorkload]:
        out = [GroupWorkload(layer, "node", layer.group_type, n)
               for layer, n in self.node_counts.items()]
        out += [GroupWorkload(p, "edge", pair_type(p), m) for p, m in self.edge_counts.items()]
        return out


@functools.lru_cache(maxsize=1)
def _nominal_workload() -> Workload:
    from .synthetic import generate_synthetic

    return Workload.from_graph(generate_synthetic(0))


def table_workloads(node_sizes: dict, edge_sizes: dict) -> list[GroupWorkload]:
    """One workload per group, sized by group type (e.g. ``{"A": 138, "B": 62}``)."""
    out = [GroupWorkload(layer, "node", layer.group_type, node_sizes[layer.group_type])
           for layer in LayerId]
    out += [GroupWorkload(p, "edge", pair_type(p), edge_sizes[pair_type(p)])
            for p in LEGAL_PAIRS]
    return out


@dataclass(frozen=True)
class Allocation:
    """PE counts per group for the Nodeblock, Edgeblock and Aggregate stages.

    The classifier stage reuses the Edgeblock counts.
    """

    node: dict
    edge: dict
    aggregate: dict

    def __post_init__(self):
        for stage in (self.node, self.edge, self.aggregate):
            if any(int(v) < 0 for v in stage.values()):
                raise DomainError("PE counts must be non-negative")

    @property
    def uniform(self) -> bool:
        return set(self.node) == {ALL}

    def totals(self) -> dict:
        return {"node": sum(self.node.values()), "edge": sum(self.edge.values()),
                "aggregate": sum(self.aggregate.values())}

    @property
    def total(self) -> int:
        return sum(self.totals().values())

    def by_type(self) -> dict:
        """PE count per group type, provided every group of a type agrees."""
        out: dict = {}
        for group, n in self.node.items():
            out.setdefault(group.group_type, set()).add(n)
        for group, n in self.edge.items():
            out.setdefault(pair_type(group), set()).add(n)
        if any(len(v) != 1 for v in out.values()):
            raise StructuralError("PE counts differ within a group type")
        return {k: v.pop() for k, v in out.items()}

    def rows(self) -> list[tuple]:
        """``(stage, group label, PEs)`` rows in canonical order."""
        def lab(g):
            return g if g == ALL else (g.name if isinstance(g, LayerId) else pair_label(g))
        rows = [("node", lab(g), n) for g, n in self.node.items()]
        rows += [("edge", lab(g), n) for g, n in self.edge.items()]
        rows += [("aggregate", lab(g), n) for g, n in self.aggregate.items()]
        return rows


def _split(groups):
    nodes = {g.group: g for g in groups if g.kind == "node"}
    edges = {g.group: g for g in groups if g.kind == "edge"}
    missing = [layer.name for layer in LayerId if layer not in nodes]
    missing += [pair_label(p) for p in LEGAL_PAIRS if p not in edges]
    if missing:
        raise StructuralError(f"workloads missing for groups: {', '.join(missing)}")
    return nodes, edges


def allocate_mpa(n_pes: int) -> Allocation:
    """``n_pes`` system PEs, each an Edgeblock, Aggregate and Nodeblock PE."""
    if n_pes < 0:
        raise DomainError("PE count must be non-negative")
    return Allocation({ALL: n_pes}, {ALL: n_pes}, {ALL: n_pes})


def allocate_scaled(n_pes: int) -> Allocation:
    """``n_pes`` PEs for every node and edge group."""
    return Allocation({layer: n_pes for layer in LayerId}, {p: n_pes for p in LEGAL_PAIRS},
                      {p: n_pes for p in LEGAL_PAIRS})


def allocate_uniform(groups) -> Allocation:
    """One PE per group and stage."""
    nodes, edges = _split(groups)
    return allocate_scaled(1)


def _ratio_pes(size: int, smallest: int) -> int:
    if smallest <= 0:
        return 1
    # round half up, never below one PE
    return max(1, math.floor(size / smallest + 0.5))


def allocate_data_aware(groups) -> Allocation:
    """PEs in proportion to workload, relative to the smallest group of the same kind."""
    nodes, edges = _split(groups)
    n_min = min(g.size for g in nodes.values())
    e_min = min(g.size for g in edges.values())
    node = {layer: _ratio_pes(nodes[layer].size, n_min) for layer in LayerId}
    edge = {p: _ratio_pes(edges[p].size, e_min) for p in LEGAL_PAIRS}
    return Allocation(node, edge, dict(edge))


def allocate(variant: str, workload: Workload, n_pes: int = 8) -> Allocation:
    """Default allocation of a variant; ``n_pes`` only applies to ``mpa``."""
    check_variant(variant)
    if variant == "mpa":
        return allocate_mpa(n_pes)
    if variant == "geo":
        return allocate_uniform(workload.groups())
    return allocate_data_aware(workload.groups())


# -- resources -----------------------------------------------------------------

def blocks_for_bits(bits: int) -> float:
    """Block memories (36 Kib units) for one array, allocated in 18 Kib halves."""
    return math.ceil(bits / HALF_BLOCK_BITS) / 2 if bits > 0 else 0.0


def fifo_blocks(depth: int, width_bits: int) -> float:
    bits = depth * width_bits
    return 0.0 if bits <= SRL_FIFO_BITS else blocks_for_bits(bits)


@dataclass(frozen=True)
class ResourceEstimate:
    node_array_bits_per_pe: int  # largest single node array
    node_array_blocks_per_pe: float  # block memories of that array
    node_array_blocks: float  # summed over every PE that holds a node array
    fifo_blocks: float
    multipliers: int
    registers: int
    arrays: dict = field(default_factory=dict, compare=False)  # PE label -> bits

    @property
    def block_memories(self) -> float:
        return self.node_array_blocks + self.fifo_blocks

    def as_dict(self) -> dict:
        return {
            "node_array_bits_per_pe": self.node_array_bits_per_pe,
            "node_array_blocks_per_pe": self.node_array_blocks_per_pe,
            "node_array_blocks": self.node_array_blocks,
            "fifo_blocks": self.fifo_blocks,
            "block_memories": self.block_memories,
            "multipliers": self.multipliers,
            "registers": self.registers,
        }


def estimate_resources(a: Allocation, workload: Workload, variant: str,
                       mlp_weights: dict | None = None, d_node: int = 3,
                       fifos: dict | None = None) -> ResourceEstimate:
    """Node-array block memories, FIFO memories, multipliers and weight registers.

    Every Edgeblock, Aggregate and classifier PE holds a node array of
    ``capacity * d_node`` words of 14 bits.  The capacity is the whole graph
    for ``mpa`` and the larger of the group's two node groups otherwise.
    ``mlp_weights`` maps ``edge``/``node``/``classifier`` to
    ``(weights, params)`` counts of each MLP; ``fifos`` maps a channel name
    to ``(depth, width_bits)``.
    """
    check_variant(variant)
    if workload.n_nodes <= 0 and variant == "mpa" and a.total:
        raise DomainError("nominal graph size must be positive")
    arrays: dict = {}

    def add_arrays(stage, group, n_pe, capacity):
        bits = capacity * d_node * WORD_BITS
        for k in range(n_pe):
            arrays[f"{stage}:{group}:{k}"] = bits

    if variant == "mpa" or a.uniform:
        for stage in ("edge", "aggregate", "classifier"):
            n_pe = (a.aggregate if stage == "aggregate" else a.edge).get(ALL, 0)
            add_arrays(stage, ALL, n_pe, workload.n_nodes)
    else:
        for p in LEGAL_PAIRS:
            cap = max(workload.node_counts[p[0]], workload.node_counts[p[1]])
            add_arrays("edge", pair_label(p), a.edge.get(p, 0), cap)
            add_arrays("aggregate", pair_label(p), a.aggregate.get(p, 0), cap)
            add_arrays("classifier", pair_label(p), a.edge.get(p, 0), cap)

    per_pe_bits = max(arrays.values(), default=0)
    array_blocks = sum(blocks_for_bits(b) for b in arrays.values())
    f_blocks = sum(fifo_blocks(d, w) for d, w in (fifos or {}).values())

    mlp_weights = mlp_weights or {}
    totals = a.totals()
    pes = {"edge": totals["edge"], "node": totals["node"], "classifier": totals["edge"]}
    mults = sum(pes[k] * mlp_weights.get(k, (0, 0))[0] for k in pes)
    regs = sum(pes[k] * mlp_weights.get(k, (0, 0))[1] * WORD_BITS for k in pes)
    return ResourceEstimate(per_pe_bits, blocks_for_bits(per_pe_bits), array_blocks,
                            f_blocks, mults, regs, arrays)
