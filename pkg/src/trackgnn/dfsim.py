"""Cycle-approximate dataflow simulation of the staged inference pipeline.

A pipeline is a set of *units* (PE arrays) connected by bounded FIFO
channels that carry one token per element.  Each unit runs a fixed
program of phases for every graph:

``STREAM``
    pop one token from every input per element, ``width`` elements per
    issue slot (the PE count), one slot every ``ii`` cycles;
``LOAD``
    fill a local array from each input independently, ``width`` tokens
    per input per slot;
``DELAY``
    a fixed number of idle cycles (the adder-tree epilogue).

A batch issued at cycle ``t`` is ready at ``t + ii + depth`` and is
pushed downstream in issue order once every output channel has room.
A unit whose oldest ready batch cannot be pushed stalls.  Graphs are
streamed back to back so the steady-state interval can be measured.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import kernels
from .alloc import (ALL, Allocation, Workload, allocate, allocate_mpa, allocate_scaled,
                    check_variant, estimate_resources)
from .errors import DeadlockError, DomainError
from .fxp import WORD_BITS
from .geom import LEGAL_PAIRS, LayerId, pair_label
from .inet import InferConfig

STREAM, LOAD, DELAY = kernels.STREAM, kernels.LOAD, kernels.DELAY
SOURCE = None  # input that is always available (off-chip or upstream of the model)

DEFAULT_CLOCK_MHZ = 200
REQUIRED_MGPS = Fraction(222, 100)
UNBOUNDED = 1 << 40
DEFAULT_GRAPHS = 5
STAGES = ("edge", "aggregate", "node", "classifier")
VARIANT_NAMES = {"mpa": "MPA", "geo": "MPA_geo", "geo-rsrc": "MPA_geo_rsrc"}


# -- configuration -------------------------------------------------------------

@dataclass(frozen=True)
class StageConfig:
    kind: str
    pes: int
    ii: int = 1
    depth: int = 1

    def __post_init__(self):
        if self.kind not in STAGES:
            raise DomainError(f"unknown stage kind {self.kind!r}")
        if self.pes < 1 or self.ii < 1 or self.depth < 1:
            raise DomainError("stage PEs, II and depth must all be >= 1")


@dataclass(frozen=True)
class CostModel:
    """Per-stage initiation intervals and pipeline depths, in cycles."""

    ii_edge: int = 1
    ii_aggregate: int = 1
    ii_node: int = 1
    ii_classifier: int = 1
    depth_edge: int = 12
    depth_aggregate: int = 4
    depth_node: int = 12
    depth_classifier: int = 12
    load_width: int = 1  # node-array words written per cycle

    def __post_init__(self):
        for name, v in self.as_dict().items():
            if int(v) != v or v < (0 if name.startswith("depth") else 1):
                raise DomainError(f"{name} must be a positive integer, got {v!r}")

    @classmethod
    def for_model(cls, cfg: InferConfig) -> "CostModel":
        """Depths of MLP-bearing stages set to 4 cycles per MLP layer."""
        d = 4 * (cfg.depth + 1)
        return cls(depth_edge=d, depth_node=d, depth_classifier=d)

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    def ii(self, stage: str) -> int:
        return getattr(self, f"ii_{stage}")

    def depth(self, stage: str) -> int:
        return getattr(self, f"depth_{stage}")


# -- pipeline description ------------------------------------------------------

@dataclass(frozen=True)
class Phase:
    kind: int
    count: int  # elements (STREAM) or cycles (DELAY); ignored by LOAD
    width: int = 1
    ii: int = 1
    depth: int = 0
    inputs: tuple = ()  # channel names (STREAM) or (channel, count) pairs (LOAD)
    outputs: tuple = ()
    drain: bool = False


@dataclass(frozen=True)
class Unit:
    name: str
    stage: str
    phases: tuple
    sink: bool = False


@dataclass(frozen=True)
class Pipeline:
    units: tuple
    channels: tuple  # channel names in creation order
    widths: dict = field(default_factory=dict, compare=False)  # channel -> bits per token

    def __post_init__(self):
        known = set(self.channels)
        for u in self.units:
            for ph in u.phases:
                names = [c for c, _ in ph.inputs] if ph.kind == LOAD else list(ph.inputs)
                for c in [*names, *ph.outputs]:
                    if c is not SOURCE and c not in known:
                        raise DomainError(f"unit {u.name} uses unknown channel {c!r}")
        if not any(u.sink for u in self.units):
            raise DomainError("pipeline has no sink unit")

    def per_graph_work(self) -> int:
        """Upper bound on the issue slots of one graph, summed over units."""
        total = 0
        for u in self.units:
            for ph in u.phases:
                if ph.kind == DELAY:
                    total += ph.count
                elif ph.kind == LOAD:
                    total += (max((n for _, n in ph.inputs), default=0) + ph.width) * ph.ii
                else:
                    total += (ph.count + ph.width) * ph.ii
                total += ph.ii + ph.depth + 1
        return total


def linear_pipeline(stages, n_elements: int) -> Pipeline:
    """A chain of streaming stages, each handling every element once."""
    stages = list(stages)
    if not stages:
        raise DomainError("a pipeline needs at least one stage")
    chans = tuple(f"c{k}" for k in range(len(stages) - 1))
    units = []
    for k, s in enumerate(stages):
        inp = (SOURCE,) if k == 0 else (chans[k - 1],)
        out = (chans[k],) if k < len(chans) else ()
        ph = Phase(STREAM, n_elements, s.pes, s.ii, s.depth, inp, out)
        units.append(Unit(f"{s.kind}{k}", s.kind, (ph,), sink=not out))
    return Pipeline(tuple(units), chans)


def _epilogue(max_in_degree: int) -> int:
    return math.ceil(math.log2(max_in_degree)) if max_in_degree > 1 else 0


def _pick(stage_map: dict, key, variant: str) -> int:
    n = stage_map.get(ALL if ALL in stage_map else key, 0)
    if n < 1:
        raise DomainError(f"{variant}: group {key} has no PEs")
    return int(n)


def build_pipeline(variant: str, a: Allocation, workload: Workload,
                   cost: CostModel = CostModel(), cfg: InferConfig = InferConfig()) -> Pipeline:
    """Unit/channel graph of one architecture variant."""
    check_variant(variant)
    ew, nw = cfg.d_edge * WORD_BITS, cfg.d_node * WORD_BITS
    tail = _epilogue(workload.max_in_degree)
    c = cost
    if variant == "mpa" or a.uniform:
        if not a.uniform:
            raise DomainError("mpa takes a uniform allocation")
        pe, pa, pn = (_pick(s, ALL, variant) for s in (a.edge, a.aggregate, a.node))
        n, m = workload.n_nodes, workload.n_edges
        units = (
            Unit("edge", "edge", (
                Phase(LOAD, 0, c.load_width, 1, 0, ((SOURCE, n),)),
                Phase(STREAM, m, pe, c.ii_edge, c.depth_edge, (SOURCE,), ("e2a", "e2c")))),
            Unit("aggregate", "aggregate", (
                Phase(STREAM, m, pa, c.ii_aggregate, 0, ("e2a",), drain=True),
                Phase(DELAY, tail),
                Phase(STREAM, n, pa, 1, c.depth_aggregate, (SOURCE,), ("a2n",)))),
            Unit("node", "node", (
                Phase(STREAM, n, pn, c.ii_node, c.depth_node, ("a2n",), ("n2c",)),)),
            Unit("classifier", "classifier", (
                Phase(LOAD, 0, pe, 1, 0, (("n2c", n),), drain=True),
                Phase(STREAM, m, pe, c.ii_classifier, c.depth_classifier, ("e2c",))),
                sink=True),
        )
        widths = {"e2a": ew, "e2c": ew, "a2n": ew, "n2c": nw}
        return Pipeline(units, ("e2a", "e2c", "a2n", "n2c"), widths)

    units, chans, widths = [], [], {}
    nodes, edges = workload.node_counts, workload.edge_counts
    for p in LEGAL_PAIRS:
        lab = pair_label(p)
        pe, pa = _pick(a.edge, p, variant), _pick(a.aggregate, p, variant)
        n_in, n_out, m = nodes[p[0]], nodes[p[1]], edges[p]
        e2a, e2c, a2n = f"e2a:{lab}", f"e2c:{lab}", f"a2n:{lab}"
        n2c_in, n2c_out = f"n2c:{lab}:{p[0].name}", f"n2c:{lab}:{p[1].name}"
        chans += [e2a, e2c, a2n, n2c_in, n2c_out]
        widths.update({e2a: ew, e2c: ew, a2n: ew, n2c_in: nw, n2c_out: nw})
        units.append(Unit(f"edge:{lab}", "edge", (
            Phase(LOAD, 0, c.load_width, 1, 0, ((SOURCE, n_in), (SOURCE, n_out))),
            Phase(STREAM, m, pe, c.ii_edge, c.depth_edge, (SOURCE,), (e2a, e2c)))))
        units.append(Unit(f"aggregate:{lab}", "aggregate", (
            Phase(STREAM, m, pa, c.ii_aggregate, 0, (e2a,), drain=True),
            Phase(DELAY, tail),
            Phase(STREAM, n_out, pa, 1, c.depth_aggregate, (SOURCE,), (a2n,)))))
        units.append(Unit(f"classifier:{lab}", "classifier", (
            Phase(LOAD, 0, pe, 1, 0, ((n2c_in, n_in), (n2c_out, n_out)), drain=True),
            Phase(STREAM, m, pe, c.ii_classifier, c.depth_classifier, (e2c,))), sink=True))
    for layer in LayerId:
        ins = tuple(f"a2n:{pair_label(p)}" for p in LEGAL_PAIRS if p[1] == layer) or (SOURCE,)
        outs = tuple(f"n2c:{pair_label(p)}:{layer.name}" for p in LEGAL_PAIRS if layer in p)
        units.append(Unit(f"node:{layer.name}", "node", (
            Phase(STREAM, nodes[layer], _pick(a.node, layer, variant), c.ii_node,
                  c.depth_node, ins, outs),)))
    return Pipeline(tuple(units), tuple(chans), widths)


# -- running -------------------------------------------------------------------

@dataclass(frozen=True)
class RawRun:
    """Cycle counts of one simulation, before unit conversion."""

    completions: tuple  # cycle at which each graph's last output left the pipeline
    busy: dict  # unit -> issue slots used
    stall: dict  # unit -> cycles blocked on a full output
    peak: dict  # channel -> peak occupancy
    pushed: dict
    popped: dict
    cycles: int

    @property
    def latency(self) -> int:
        return self.completions[0]

    @property
    def interval(self) -> int:
        if len(self.completions) < 2:
            return self.completions[0]
        return self.completions[-1] - self.completions[-2]


def _depths(pipe: Pipeline, fifos) -> list[int]:
    fifos = dict(fifos or {})
    extra = set(fifos) - set(pipe.channels)
    if extra:
        raise DomainError(f"unknown FIFO channels: {sorted(extra)}")
    out = []
    for ch in pipe.channels:
        d = fifos.get(ch, UNBOUNDED)
        if d is None:
            d = UNBOUNDED
        if int(d) != d or d < 1:
            raise DomainError(f"FIFO depth of {ch} must be >= 1, got {d!r}")
        out.append(int(d))
    return out


def run_pipeline(pipe: Pipeline, fifos=None, n_graphs: int = DEFAULT_GRAPHS) -> RawRun:
    """Simulate ``n_graphs`` back-to-back graphs; raises ``DeadlockError``."""
    if n_graphs < 1:
        raise DomainError("n_graphs must be >= 1")
    cidx = {ch: k for k, ch in enumerate(pipe.channels)}

    def chan(name):
        return kernels.SOURCE if name is SOURCE else cidx[name]

    ups, kind, count, width, ii, depth, drain = [0], [], [], [], [], [], []
    ins, inc, incnt, outs, outc = [0], [], [], [0], []
    for u in pipe.units:
        for ph in u.phases:
            kind.append(ph.kind)
            count.append(ph.count)
            width.append(max(1, ph.width))
            ii.append(max(1, ph.ii))
            depth.append(ph.depth)
            drain.append(int(ph.drain))
            if ph.kind == LOAD:
                for name, n in ph.inputs:
                    inc.append(chan(name))
                    incnt.append(n)
            else:
                for name in ph.inputs:
                    inc.append(chan(name))
                    incnt.append(0)
            ins.append(len(inc))
            outc.extend(cidx[o] for o in ph.outputs)
            outs.append(len(outc))
        ups.append(len(kind))

    watchdog = max(ii) + max(depth) + max([c for k, c in zip(kind, count) if k == DELAY],
                                          default=0) + 2
    max_cycles = (n_graphs + 2) * pipe.per_graph_work() + 1000
    i64 = lambda v: np.asarray(v, dtype=np.int64)  # noqa: E731
    (status, t, finish, busy, stall, peak, pushed, popped,
     dl_cycle, dl_chan, dl_units) = kernels.run_dataflow(
        i64(_depths(pipe, fifos)), i64(ups), i64(kind), i64(count), i64(width), i64(ii),
        i64(depth), i64(drain), i64(ins), i64(inc), i64(incnt), i64(outs), i64(outc),
        int(n_graphs), int(max_cycles), int(watchdog))
    names = [u.name for u in pipe.units]
    if status == kernels.DEADLOCK:
        raise DeadlockError(pipe.channels[dl_chan] if dl_chan >= 0 else None, int(dl_cycle),
                            tuple(names[k] for k in dl_units))
    if status != kernels.OK:
        raise RuntimeError(f"simulation did not finish within {max_cycles} cycles")
    sinks = [k for k, u in enumerate(pipe.units) if u.sink]
    completions = tuple(int(v) for v in finish[sinks].max(axis=0))
    return RawRun(completions, dict(zip(names, busy.tolist())), dict(zip(names, stall.tolist())),
                  dict(zip(pipe.channels, peak.tolist())),
                  dict(zip(pipe.channels, pushed.tolist())),
                  dict(zip(pipe.channels, popped.tolist())), int(t))


# -- reports -------------------------------------------------------------------

def truncate(x: Fraction, places: int = 3) -> str:
    """Decimal rendering of a non-negative rational, truncated (not rounded)."""
    x = Fraction(x)
    sign = "-" if x < 0 else ""
    scaled = math.floor(abs(x) * 10 ** places)
    whole, frac = divmod(scaled, 10 ** places)
    return f"{sign}{whole}.{frac:0{places}d}" if places else f"{sign}{whole}"


def _exact(x) -> Fraction:
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class SimReport:
    variant: str
    pes: str
    clock_mhz: Fraction
    latency_cycles: Fraction
    interval_cycles: Fraction
    completions: tuple = ()
    stage_busy: dict = field(default_factory=dict, compare=False)
    stage_stall: dict = field(default_factory=dict, compare=False)
    unit_busy: dict = field(default_factory=dict, compare=False)
    unit_stall: dict = field(default_factory=dict, compare=False)
    fifo_peak: dict = field(default_factory=dict, compare=False)
    resources: object = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "clock_mhz", _exact(self.clock_mhz))
        object.__setattr__(self, "latency_cycles", _exact(self.latency_cycles))
        object.__setattr__(self, "interval_cycles", _exact(self.interval_cycles))
        if self.clock_mhz <= 0 or self.interval_cycles <= 0:
            raise DomainError("clock and interval must be positive")

    @classmethod
    def from_times(cls, interval_us, latency_us=None, clock_mhz=DEFAULT_CLOCK_MHZ,
                   variant: str = "", pes: str = "") -> "SimReport":
        """Report for given end-to-end times in microseconds."""
        clock = _exact(clock_mhz)
        interval = _exact(interval_us) * clock
        latency = interval if latency_us is None else _exact(latency_us) * clock
        return cls(variant, pes, clock, latency, interval)

    @property
    def latency_us(self) -> Fraction:
        return self.latency_cycles / self.clock_mhz

    @property
    def interval_us(self) -> Fraction:
        return self.interval_cycles / self.clock_mhz

    @property
    def throughput_mgps(self) -> Fraction:
        return self.clock_mhz / self.interval_cycles

    @property
    def mgps_text(self) -> str:
        return truncate(self.throughput_mgps)

    def row(self) -> dict:
        out = {
            "variant": self.variant,
            "pes": self.pes,
            "latency_us": truncate(self.latency_us),
            "interval_us": truncate(self.interval_us),
            "mgps": self.mgps_text,
        }
        if self.resources is not None:
            for k, v in self.resources.as_dict().items():
                out[k] = f"{v:g}" if isinstance(v, float) else str(v)
        return out

    def as_dict(self) -> dict:
        return {
            **self.row(),
            "clock_mhz": str(self.clock_mhz),
            "latency_cycles": str(self.latency_cycles),
            "interval_cycles": str(self.interval_cycles),
            "completions": list(self.completions),
            "stage_busy": dict(self.stage_busy),
            "stage_stall": dict(self.stage_stall),
            "unit_busy": dict(self.unit_busy),
            "unit_stall": dict(self.unit_stall),
            "fifo_peak": dict(self.fifo_peak),
            "resources": None if self.resources is None else self.resources.as_dict(),
        }


def reports_csv(reports) -> str:
    rows = [r.row() for r in reports]
    cols: list = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def reports_json(reports) -> str:
    return json.dumps([r.as_dict() for r in reports], indent=2, sort_keys=True) + "\n"


def _pes_label(a: Allocation) -> str:
    if a.uniform:
        return str(a.node[ALL])
    t = a.totals()
    return f"{t['edge']}/{t['aggregate']}/{t['node']}"


def report_from_run(run: RawRun, pipe: Pipeline, variant: str, pes: str,
                    clock_mhz=DEFAULT_CLOCK_MHZ, resources=None) -> SimReport:
    sb, ss = dict.fromkeys(STAGES, 0), dict.fromkeys(STAGES, 0)
    for u in pipe.units:
        sb[u.stage] += run.busy[u.name]
        ss[u.stage] += run.stall[u.name]
    return SimReport(VARIANT_NAMES.get(variant, variant), pes, _exact(clock_mhz), run.latency,
                     run.interval, run.completions, sb, ss, run.busy, run.stall, run.peak,
                     resources)


def mlp_weight_counts(cfg: InferConfig) -> dict:
    out = {}
    for name, widths in cfg.mlp_shapes().items():
        w = sum(a * b for a, b in zip(widths, widths[1:]))
        out[name] = (w, w + sum(widths[1:]))
    return out


def simulate(variant: str, a: Allocation, workload: Workload,
             clock_mhz=DEFAULT_CLOCK_MHZ, fifos=None, cost: CostModel = CostModel(),
             cfg: InferConfig = InferConfig(), n_graphs: int = DEFAULT_GRAPHS) -> SimReport:
    """Simulate a variant; ``fifos`` maps channel names to depths (unbounded if absent)."""
    pipe = build_pipeline(variant, a, workload, cost, cfg)
    run = run_pipeline(pipe, fifos, n_graphs)
    fifo_bits = None
    if fifos:
        fifo_bits = {ch: (int(d), pipe.widths.get(ch, WORD_BITS)) for ch, d in fifos.items()}
    res = None
    if workload.n_nodes:
        res = estimate_resources(a, workload, variant, mlp_weight_counts(cfg), cfg.d_node,
                                 fifo_bits)
    return report_from_run(run, pipe, variant, _pes_label(a), clock_mhz, res)


def channel_names(variant: str, a: Allocation, workload: Workload,
                  cost: CostModel = CostModel()) -> tuple:
    return build_pipeline(variant, a, workload, cost).channels


# -- requirement ---------------------------------------------------------------

@dataclass(frozen=True)
class RequirementResult:
    passed: bool
    throughput: Fraction
    threshold: Fraction
    margin: Fraction

    @property
    def margin_text(self) -> str:
        return truncate(self.margin) if self.margin >= 0 else "-" + truncate(-self.margin)

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{verdict}: {truncate(self.throughput)} MGPS vs > {truncate(self.threshold, 2)}"
                f" MGPS (margin {self.margin_text})")


def check_requirement(r, threshold=REQUIRED_MGPS) -> RequirementResult:
    """Pass iff throughput strictly exceeds ``threshold`` MGPS.

    ``r`` is a ``SimReport`` or a throughput in MGPS; the margin is
    measured on the three-decimal rendering shown in reports.
    """
    tput = r.throughput_mgps if isinstance(r, SimReport) else _exact(r)
    threshold = _exact(threshold)
    shown = Fraction(truncate(tput))
    return RequirementResult(tput > threshold, tput, threshold, shown - threshold)


# -- sweeps --------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    pes: int
    report: SimReport
    resources: object


def scaled_allocation(variant: str, n: int, workload: Workload) -> Allocation:
    """Allocation of ``variant`` with every PE count multiplied by ``n``."""
    check_variant(variant)
    if variant == "mpa":
        return allocate_mpa(n)
    if variant == "geo":
        return allocate_scaled(n)
    base = allocate("geo-rsrc", workload)
    return Allocation({k: v * n for k, v in base.node.items()},
                      {k: v * n for k, v in base.edge.items()},
                      {k: v * n for k, v in base.aggregate.items()})


def _map(fn, items, workers):
    items = list(items)
    if workers and workers > 1 and len(items) > 1:
        # the compiled kernel releases the GIL, so threads run concurrently
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def sweep_pes(variant: str, pe_range, workload: Workload, clock_mhz=DEFAULT_CLOCK_MHZ,
              cost: CostModel = CostModel(), cfg: InferConfig = InferConfig(),
              workers: int = 1) -> list[SweepPoint]:
    pes = sorted(set(int(p) for p in pe_range))
    if not pes:
        raise DomainError("pe_range is empty")

    def one(n):
        r = simulate(variant, scaled_allocation(variant, n, workload), workload, clock_mhz,
                     cost=cost, cfg=cfg)
        return SweepPoint(n, replace(r, pes=str(n)), r.resources)

    return _map(one, pes, workers)


# -- FIFO sizing ---------------------------------------------------------------

def min_fifo_depths(variant: str, a: Allocation, workload: Workload,
                    cost: CostModel = CostModel(), n_graphs: int = DEFAULT_GRAPHS) -> dict:
    """Smallest per-channel depths that keep the unbounded-FIFO interval."""
    return min_pipeline_depths(build_pipeline(variant, a, workload, cost), n_graphs)


def min_pipeline_depths(pipe: Pipeline, n_graphs: int = DEFAULT_GRAPHS) -> dict:
    ref = run_pipeline(pipe, None, n_graphs)
    target = ref.interval

    def ok(depths):
        try:
            return run_pipeline(pipe, depths, n_graphs).interval == target
        except DeadlockError:
            return False

    # with every depth at its unbounded peak the run is identical to the reference
    depths = {ch: max(1, ref.peak[ch]) for ch in pipe.channels}
    for ch in pipe.channels:
        lo, hi = 1, depths[ch]
        while lo < hi:
            mid = (lo + hi) // 2
            if ok({**depths, ch: mid}):
                hi = mid
            else:
                lo = mid + 1
        depths[ch] = hi
    # validity need not be monotone in one depth once others shrank; settle it
    changed = True
    while changed:
        changed = False
        for ch in pipe.channels:
            while depths[ch] > 1 and ok({**depths, ch: depths[ch] - 1}):
                depths[ch] -= 1
                changed = True
    return depths


# -- calibration ---------------------------------------------------------------

@dataclass(frozen=True)
class Target:
    variant: str
    allocation: Allocation
    workload: Workload
    latency_us: Fraction
    interval_us: Fraction
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "latency_us", _exact(self.latency_us))
        object.__setattr__(self, "interval_us", _exact(self.interval_us))
        if self.latency_us <= 0 or self.interval_us <= 0:
            raise DomainError("target times must be positive")


@dataclass(frozen=True)
class Residual:
    label: str
    latency_us: Fraction
    interval_us: Fraction
    latency_error: Fraction  # relative, signed (simulated / target - 1)
    interval_error: Fraction


@dataclass(frozen=True)
class FitResult:
    cost: CostModel
    objective: Fraction  # max absolute relative error over all targets
    residuals: tuple
    evaluated: int
    method: str


def _residuals(cost, targets, clock_mhz, cfg):
    out = []
    for t in targets:
        try:
            r = simulate(t.variant, t.allocation, t.workload, clock_mhz, cost=cost, cfg=cfg)
        except DeadlockError:
            return None
        out.append(Residual(t.label or VARIANT_NAMES[t.variant], r.latency_us, r.interval_us,
                            r.latency_us / t.latency_us - 1, r.interval_us / t.interval_us - 1))
    return tuple(out)


def _objective(res):
    if res is None:
        return None
    return max(max(abs(r.latency_error), abs(r.interval_error)) for r in res)


GRID_LIMIT = 2000


def calibrate(targets, free_params: dict, base: CostModel = CostModel(),
              clock_mhz=DEFAULT_CLOCK_MHZ, cfg: InferConfig = InferConfig(),
              workers: int = 1, max_rounds: int = 20) -> FitResult:
    """Fit ``free_params`` (name -> candidate values) to minimise the worst relative error.

    Exhaustive when the grid has at most ``GRID_LIMIT`` points, otherwise
    cyclic coordinate descent from ``base``.  Ties keep the earliest
    candidate in grid order.
    """
    targets = list(targets)
    if not targets:
        raise DomainError("calibration needs at least one target")
    names = list(free_params)
    unknown = set(names) - set(base.as_dict())
    if unknown:
        raise DomainError(f"unknown cost parameters: {sorted(unknown)}")
    values = [list(free_params[n]) for n in names]
    if any(not v for v in values):
        raise DomainError("every free parameter needs at least one candidate")

    def evaluate(combo):
        cost = replace(base, **dict(zip(names, combo)))
        res = _residuals(cost, targets, clock_mhz, cfg)
        return cost, res, _objective(res)

    def better(a, b):
        return a[2] is not None and (b is None or b[2] is None or a[2] < b[2])

    size = math.prod(len(v) for v in values)
    if size <= GRID_LIMIT:
        best, count = None, 0
        for cand in _map(evaluate, itertools.product(*values), workers):
            count += 1
            if better(cand, best):
                best = cand
        method = "grid"
    else:
        current = [getattr(base, n) for n in names]
        best, count = evaluate(tuple(current)), 1
        for _ in range(max_rounds):
            improved = False
            for k in range(len(names)):
                combos = [tuple(current[:k] + [v] + current[k + 1:]) for v in values[k]]
                for combo, cand in zip(combos, _map(evaluate, combos, workers)):
                    count += 1
                    if better(cand, best):
                        best, current, improved = cand, list(combo), True
            if not improved:
                break
        method = "coordinate"
    cost, res, obj = best
    if res is None:
        raise DeadlockError(None, -1, ())
    return FitResult(cost, obj, res, count, method)


def predict(cost: CostModel, target: Target, clock_mhz=DEFAULT_CLOCK_MHZ,
            cfg: InferConfig = InferConfig()) -> Residual:
    return _residuals(cost, [target], clock_mhz, cfg)[0]


# -- published reference rows --------------------------------------------------

# measured end-to-end figures of the three architectures at 200 MHz (µs)
REFERENCE_ROWS = {
    "mpa": (Fraction("3.165"), Fraction("0.48")),
    "geo": (Fraction("2.69"), Fraction("0.425")),
    "geo-rsrc": (Fraction("2.07"), Fraction("0.31")),
}
REFERENCE_MPA_PES = 8


def reference_targets(workload: Workload | None = None, mpa_pes: int = REFERENCE_MPA_PES):
    workload = Workload.nominal() if workload is None else workload
    out = {}
    for v, (lat, itv) in REFERENCE_ROWS.items():
        a = allocate_mpa(mpa_pes) if v == "mpa" else allocate(v, workload)
        out[v] = Target(v, a, workload, lat, itv, VARIANT_NAMES[v])
    return out


def compare_variants(workload: Workload, cost: CostModel = CostModel(),
                     clock_mhz=DEFAULT_CLOCK_MHZ, mpa_pes: int = REFERENCE_MPA_PES,
                     cfg: InferConfig = InferConfig()) -> list[SimReport]:
    out = []
    for v in ("mpa", "geo", "geo-rsrc"):
        a = allocate_mpa(mpa_pes) if v == "mpa" else allocate(v, workload)
        out.append(simulate(v, a, workload, clock_mhz, cost=cost, cfg=cfg))
    return out
