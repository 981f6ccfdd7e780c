"""Time the compiled and pure-Python kernel backends side by side.

    python3 benchmarks/bench_kernels.py [--repeat N] [--slow]

Each row reports the best of N runs per backend and the speed-up.
Outputs are checked for equality before timing.
"""
import argparse
import timeit
from unittest import mock

import numpy as np

from trackgnn import dfsim, kernels
from trackgnn.alloc import Workload, allocate, allocate_mpa
from trackgnn.inet import InferConfig, infer, random_params
from trackgnn.synthetic import generate_synthetic


def cases():
    rng = np.random.default_rng(0)
    g = generate_synthetic(0)
    vals = rng.integers(-8192, 8192, (g.n_edges, 4))
    x = rng.integers(-8192, 8192, (g.n_edges, 10))
    w = rng.integers(-256, 256, (10, 8))
    b = rng.integers(-256, 256, 8)
    params = random_params(InferConfig(), rng)
    nominal = Workload.nominal()

    def sim(variant):
        a = allocate_mpa(8) if variant == "mpa" else allocate(variant, nominal)
        return lambda: dfsim.simulate(variant, a, nominal).completions

    return [
        ("scatter_add_sat 1252x4", lambda: kernels.scatter_add_sat(vals, g.receivers, g.n_nodes)),
        ("dense_sat 1252x10x8", lambda: kernels.dense_sat(x, w, b)),
        ("infer nominal graph", lambda: infer(g, params)),
        ("simulate mpa", sim("mpa")),
        ("simulate geo", sim("geo")),
        ("simulate geo-rsrc", sim("geo-rsrc")),
    ]


# about 25 s per run on the pure-Python backend, so it is timed once
SLOW = ("min_fifo_depths geo-rsrc",
        lambda: dfsim.min_fifo_depths("geo-rsrc", allocate("geo-rsrc", Workload.nominal()),
                                      Workload.nominal()))


def use(module):
    return mock.patch.multiple(kernels, scatter_add_sat=module.scatter_add_sat,
                               dense_sat=module.dense_sat, run_dataflow=module.run_dataflow)


def same(a, b):
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    return a == b


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--slow", action="store_true", help="also time the FIFO depth search")
    args = ap.parse_args()
    found = kernels.backends()
    if "cython" not in found:
        print("compiled backend not built; run `pip install -e . --no-build-isolation`")
        return 1
    print(f"{'case':<28}{'cython (ms)':>14}{'python (ms)':>14}{'speed-up':>11}")
    todo = [(n, f, args.repeat) for n, f in cases()] + ([(*SLOW, 1)] if args.slow else [])
    for name, fn, repeat in todo:
        best, outs = {}, {}
        for label in ("cython", "python"):
            with use(found[label]):
                outs[label] = fn()
                best[label] = min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3
        assert same(outs["cython"], outs["python"]), f"{name}: backends disagree"
        ratio = best["python"] / best["cython"]
        print(f"{name:<28}{best['cython']:>14.3f}{best['python']:>14.3f}{ratio:>10.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
