"""Command-line entry point: ``trackgnn <command> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dfsim, fileio
from .alloc import (VARIANTS, Workload, allocate_data_aware, allocate_mpa, allocate_uniform,
                    estimate_resources, table_workloads)
from .errors import DeadlockError, ParseError, TrackGNNError, ValidationError
from .geom import pair_label, partition, validate
from .inet import InferConfig, infer, infer_partitioned, random_params
from .synthetic import TYPE_EDGE_SIZES, TYPE_NODE_SIZES, default_profile, generate_synthetic

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_REQUIREMENT = 5
EXIT_DEADLOCK = 6


class Output:
    """Writes named artifacts to ``--out`` (if given) and echoes the main one."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir) if out_dir else None
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str, echo: bool = False):
        if self.dir:
            (self.dir / name).write_text(text, encoding="utf-8", newline="\n")
        if echo:
            sys.stdout.write(text)


def _config(args) -> InferConfig:
    return InferConfig(d_node=args.d_node, d_edge=args.d_edge, hidden=args.hidden,
                       depth=args.depth, iterations=args.iterations)


def _cost(args, cfg: InferConfig) -> dfsim.CostModel:
    if not getattr(args, "cost", None):
        return dfsim.CostModel()
    path = Path(args.cost)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno, path) from None
    doc = doc.get("cost", doc)
    unknown = set(doc) - set(dfsim.CostModel().as_dict())
    if unknown:
        raise ParseError(f"unknown cost fields {sorted(unknown)}", path=path)
    return dfsim.CostModel(**doc)


def _workload(args) -> Workload:
    if getattr(args, "graph", None):
        return Workload.from_graph(fileio.load_graph(args.graph))
    return Workload.nominal()


def _mpa_pes(args) -> int:
    return dfsim.REFERENCE_MPA_PES if args.pes is None else args.pes


def _allocation(args, workload: Workload):
    if args.variant == "mpa":
        return allocate_mpa(_mpa_pes(args))
    return dfsim.scaled_allocation(args.variant, args.pes or 1, workload)


def _fifos(items):
    out = {}
    for item in items or ():
        name, sep, depth = item.rpartition("=")
        if not sep:
            raise ParseError(f"--fifo expects NAME=DEPTH, got {item!r}")
        try:
            out[name] = int(depth)
        except ValueError:
            raise ParseError(f"--fifo depth must be an integer, got {depth!r}") from None
    return out


# -- commands ------------------------------------------------------------------

def cmd_generate(args, out: Output) -> int:
    profile = default_profile(args.nodes, args.edges)
    g = generate_synthetic(args.seed, profile, d_node=args.d_node, d_edge=args.d_edge)
    out.write("graph.csv", fileio.dump_graph(g), echo=out.dir is None)
    if args.weights:
        params = random_params(_config(args), np.random.default_rng(args.seed),
                               fan_in=args.fan_in)
        out.write("weights.json", fileio.dump_weights(params))
    return EXIT_OK


def cmd_validate(args, out: Output) -> int:
    g = fileio.load_graph(args.graph)
    report = validate(g)
    out.write("validation.txt", "".join(f"{d}\n" for d in report), echo=True)
    return EXIT_VALIDATION if report else EXIT_OK


def cmd_partition(args, out: Output) -> int:
    p = partition(fileio.load_graph(args.graph))
    rows = [(ng.layer.name, "node", ng.layer.group_type, len(ng), len(ng))
            for ng in p.node_groups]
    rows += [(pair_label(eg.pair), "edge", eg.kind, len(eg), p.node_array_capacity(eg.index))
             for eg in p.edge_groups]
    out.write("partition.csv", fileio.dump_rows(
        ["group", "kind", "type", "size", "node_array_capacity"], rows), echo=True)
    return EXIT_OK


def cmd_infer(args, out: Output) -> int:
    g = fileio.load_graph(args.graph)
    cfg = replace(_config(args), d_node=g.d_node, d_edge=g.d_edge)
    if args.weights:
        params = fileio.load_weights(args.weights)
    else:
        rng = np.random.default_rng(args.seed)
        params = random_params(cfg, rng, fan_in=args.fan_in)
    modes = ["fixed", "real"] if args.mode == "both" else [args.mode]
    scores = {}
    for m in modes:
        c = replace(cfg, mode=m)
        scores[m] = infer_partitioned(partition(g), params, c) if args.partitioned \
            else infer(g, params, c)
    out.write("scores.csv", fileio.dump_scores(g, scores), echo=out.dir is None)
    summary = {"n_nodes": g.n_nodes, "n_edges": g.n_edges, "modes": modes}
    if len(modes) == 2:
        dev = np.abs(scores["fixed"] - scores["real"])
        summary["max_abs_deviation"] = float(dev.max()) if dev.size else 0.0
        summary["mean_abs_deviation"] = float(dev.mean()) if dev.size else 0.0
    out.write("summary.json", fileio.dump_json(summary), echo=True)
    return EXIT_OK


def cmd_allocate(args, out: Output) -> int:
    cfg = _config(args)
    if args.table:
        groups = table_workloads(TYPE_NODE_SIZES, TYPE_EDGE_SIZES)
        workload = Workload.nominal()
    else:
        workload = _workload(args)
        groups = workload.groups()
    if args.variant == "mpa":
        a = allocate_mpa(_mpa_pes(args))
    elif args.variant == "geo":
        a = allocate_uniform(groups)
    else:
        a = allocate_data_aware(groups)
    out.write("allocation.csv", fileio.dump_rows(["stage", "group", "pes"], a.rows()), echo=True)
    res = estimate_resources(a, workload, args.variant, dfsim.mlp_weight_counts(cfg), cfg.d_node)
    out.write("resources.json", fileio.dump_json(res.as_dict()))
    return EXIT_OK


def _emit_reports(out: Output, stem: str, reports) -> None:
    out.write(f"{stem}.csv", dfsim.reports_csv(reports), echo=True)
    out.write(f"{stem}.json", dfsim.reports_json(reports))


def cmd_simulate(args, out: Output) -> int:
    cfg = _config(args)
    workload = _workload(args)
    a = _allocation(args, workload)
    fifos = _fifos(args.fifo)
    if args.min_fifos:
        fifos = dfsim.min_fifo_depths(args.variant, a, workload, _cost(args, cfg))
        out.write("fifos.json", fileio.dump_json(fifos))
    r = dfsim.simulate(args.variant, a, workload, args.clock_mhz, fifos, _cost(args, cfg), cfg)
    _emit_reports(out, "report", [r])
    if args.require:
        verdict = dfsim.check_requirement(r)
        print(verdict)
        return EXIT_OK if verdict.passed else EXIT_REQUIREMENT
    return EXIT_OK


def cmd_sweep(args, out: Output) -> int:
    cfg = _config(args)
    lo, _, hi = args.pe_range.partition("-")
    try:
        pes = range(int(lo), int(hi or lo) + 1)
    except ValueError:
        raise ParseError(f"--pe-range expects N or N-M, got {args.pe_range!r}") from None
    points = dfsim.sweep_pes(args.variant, pes, _workload(args), args.clock_mhz,
                             _cost(args, cfg), cfg, workers=args.workers)
    _emit_reports(out, "sweep", [p.report for p in points])
    return EXIT_OK


def cmd_compare(args, out: Output) -> int:
    cfg = _config(args)
    reports = dfsim.compare_variants(_workload(args), _cost(args, cfg), args.clock_mhz,
                                     _mpa_pes(args), cfg)
    _emit_reports(out, "compare", reports)
    lines = [f"{r.variant}: {dfsim.check_requirement(r)}\n" for r in reports]
    out.write("requirement.txt", "".join(lines), echo=True)
    return EXIT_OK


CALIBRATION_GRID = {
    "load_width": [1, 2, 4, 8, 16, 32, 64, 128, 256, 512],
    "depth_edge": list(range(1, 161, 4)),
    "depth_node": list(range(1, 161, 4)),
    "depth_classifier": list(range(1, 161, 4)),
}


def cmd_calibrate(args, out: Output) -> int:
    cfg = _config(args)
    targets = dfsim.reference_targets(_workload(args), _mpa_pes(args))
    fit_on = [targets[v] for v in args.fit]
    free = {k: CALIBRATION_GRID[k] for k in args.free}
    fit = dfsim.calibrate(fit_on, free, _cost(args, cfg), args.clock_mhz, cfg,
                          workers=args.workers)
    held_out = [dfsim.predict(fit.cost, t, args.clock_mhz, cfg)
                for v, t in targets.items() if v not in args.fit]

    def res(r):
        return {"label": r.label, "latency_us": float(r.latency_us),
                "interval_us": float(r.interval_us),
                "latency_error": float(r.latency_error),
                "interval_error": float(r.interval_error)}

    doc = {"cost": fit.cost.as_dict(), "objective": float(fit.objective), "method": fit.method,
           "evaluated": fit.evaluated, "fit": [res(r) for r in fit.residuals],
           "predicted": [res(r) for r in held_out]}
    out.write("calibration.json", fileio.dump_json(doc), echo=True)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--clock-mhz", type=float, default=dfsim.DEFAULT_CLOCK_MHZ,
                        help="clock frequency in MHz (default 200)")
    common.add_argument("--variant", choices=VARIANTS, default="geo-rsrc")
    common.add_argument("--mode", choices=("real", "fixed", "both"), default="both")
    common.add_argument("--out", metavar="DIR", help="write artifacts to DIR")
    model = common.add_argument_group("model dimensions")
    model.add_argument("--d-node", type=int, default=3)
    model.add_argument("--d-edge", type=int, default=4)
    model.add_argument("--hidden", type=int, default=8)
    model.add_argument("--depth", type=int, default=2)
    model.add_argument("--iterations", type=int, default=1)

    ap = argparse.ArgumentParser(prog="trackgnn", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=fn)
        return p

    p = add("generate", cmd_generate, "write a synthetic graph")
    p.add_argument("--nodes", type=int, default=739)
    p.add_argument("--edges", type=int, default=1252)
    p.add_argument("--weights", action="store_true", help="also write random weights")
    p.add_argument("--fan-in", action="store_true",
                   help="scale random weights by 1/sqrt(fan-in)")

    add("validate", cmd_validate, "check a graph file").add_argument("graph")
    add("partition", cmd_partition, "per-group sizes of a graph").add_argument("graph")

    p = add("infer", cmd_infer, "edge scores for a graph")
    p.add_argument("graph")
    p.add_argument("--weights", help="weight file (random weights from --seed if omitted)")
    p.add_argument("--partitioned", action="store_true", help="run group by group")
    p.add_argument("--fan-in", action="store_true",
                   help="scale random weights by 1/sqrt(fan-in)")

    p = add("allocate", cmd_allocate, "PE allocation and resource estimate")
    p.add_argument("--graph", help="take workloads from this graph (default: nominal)")
    p.add_argument("--table", action="store_true", help="use the per-type reference sizes")
    p.add_argument("--pes", type=int, default=None, help="system PEs for mpa (default 8)")

    for name, fn, help_ in (("simulate", cmd_simulate, "simulate one variant"),
                            ("sweep", cmd_sweep, "simulate over a range of PE counts"),
                            ("compare-variants", cmd_compare, "simulate all three variants"),
                            ("calibrate", cmd_calibrate, "fit stage constants to reference rows")):
        p = add(name, fn, help_)
        p.add_argument("--graph", help="take workloads from this graph (default: nominal)")
        p.add_argument("--cost", help="JSON file of cost-model constants")
        p.add_argument("--pes", type=int, default=None,
                       help="system PEs for mpa (default 8); PE multiplier otherwise (default 1)")
        p.add_argument("--workers", type=int, default=1)
        if name == "simulate":
            p.add_argument("--fifo", action="append", metavar="NAME=DEPTH")
            p.add_argument("--min-fifos", action="store_true", help="size FIFOs minimally")
            p.add_argument("--require", action="store_true",
                           help="exit 5 unless throughput exceeds 2.22 MGPS")
        if name == "sweep":
            p.add_argument("--pe-range", default="1-8")
        if name == "calibrate":
            p.add_argument("--fit", nargs="+", choices=VARIANTS, default=["mpa", "geo"])
            p.add_argument("--free", nargs="+", choices=sorted(CALIBRATION_GRID),
                           default=sorted(CALIBRATION_GRID))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, Output(args.out))
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except DeadlockError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEADLOCK
    except (TrackGNNError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
