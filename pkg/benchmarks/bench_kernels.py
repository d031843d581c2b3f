#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times each hot kernel in isolation, then a full simulation run with the
engine bound to each backend in turn (the protocol layer is identical; only
the arithmetic kernels swap).

    python benchmarks/bench_kernels.py [--ops 200000] [--sim-ticks 1500]
"""

import argparse
import time
from random import Random

from cogmesh import _kernels_py, kernels
from cogmesh.engine import ScenarioConfig, run

try:
    from cogmesh import _speedups
except ImportError:
    _speedups = None

KERNEL_NAMES = ("reward", "quantize", "hello_reinforce", "blend_refresh",
                "largest_same_master_component")


def bench_kernels(backend, ops):
    rng = Random(7)
    weights = {c: 0.125 for c in range(8)}
    target = {c: rng.random() for c in range(8)}
    neighbors = [[] for _ in range(60)]
    for a in range(60):
        for b in range(a + 1, 60):
            if rng.random() < 0.12:
                neighbors[a].append(b)
                neighbors[b].append(a)
    masters = [rng.randrange(-1, 4) for _ in range(60)]

    results = {}
    t0 = time.perf_counter()
    for i in range(ops):
        backend.reward(i * 1e-4 - 5.0, 1.0, 1.5707963267948966,
                       3.141592653589793)
    results["reward"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    for i in range(ops):
        backend.quantize((i % 100) * 0.01, 1.0, 4)
    results["quantize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    w = weights
    for i in range(ops):
        w = backend.hello_reinforce(weights, i % 8, 0.3)
    results["hello_reinforce"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    for _ in range(ops):
        backend.blend_refresh(weights, target, 0.1)
    results["blend_refresh"] = time.perf_counter() - t0

    graph_ops = max(1, ops // 50)
    t0 = time.perf_counter()
    for _ in range(graph_ops):
        backend.largest_same_master_component(neighbors, masters)
    results["largest_same_master_component"] = \
        (time.perf_counter() - t0) * (ops / graph_ops)
    return results


def bind(backend):
    for name in KERNEL_NAMES:
        setattr(kernels, name, getattr(backend, name))


def bench_sim(backend, ticks):
    bind(backend)
    cfg = ScenarioConfig(su_count=50, channel_count=8, duration_ticks=ticks,
                         seed=3)
    t0 = time.perf_counter()
    run(cfg, validate=False)
    return time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ops", type=int, default=200000)
    parser.add_argument("--sim-ticks", type=int, default=1500)
    args = parser.parse_args()

    print(f"pure-Python backend, {args.ops} ops per kernel")
    pure = bench_kernels(_kernels_py, args.ops)
    if _speedups is None:
        print("compiled backend not built (pip install -e . with Cython)")
        compiled = None
    else:
        compiled = bench_kernels(_speedups, args.ops)

    print(f"\n{'kernel':<34}{'pure ns/op':>12}{'compiled':>12}{'speedup':>9}")
    for name in KERNEL_NAMES:
        p = pure[name] / args.ops * 1e9
        if compiled is None:
            print(f"{name:<34}{p:>12.0f}{'-':>12}{'-':>9}")
        else:
            c = compiled[name] / args.ops * 1e9
            print(f"{name:<34}{p:>12.0f}{c:>12.0f}{p / c:>8.1f}x")

    print(f"\nfull simulation, 50 SUs x {args.sim_ticks} ticks")
    t_pure = bench_sim(_kernels_py, args.sim_ticks)
    line = f"{'pure':<12}{t_pure:8.2f} s"
    if _speedups is not None:
        t_comp = bench_sim(_speedups, args.sim_ticks)
        line += f"   {'compiled':<12}{t_comp:8.2f} s   ({t_pure / t_comp:.2f}x)"
        bind(_speedups)
    print(line)


if __name__ == "__main__":
    main()
