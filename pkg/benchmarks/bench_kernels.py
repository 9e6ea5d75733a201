"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--seed 0]

Each workload runs once per backend on identical inputs; the script also
checks that both backends return the same answers.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from faircache import kernels
from faircache.instances import random_instance
from faircache.mw import pf_exact, simple_mmf_mw
from faircache.welfare import WelfareMode, welfare


def _welfare_batch(instances):
    out = []
    for inst in instances:
        config, value = welfare(inst, np.ones(inst.n_tenants), WelfareMode.SCALED)
        out.append((config.view_ids, value))
    return out


def _mmf_batch(instances):
    return [simple_mmf_mw(inst, 0.2).as_dict() for inst in instances]


def _pf_batch(instances):
    return [pf_exact(inst, 0.15).objective for inst in instances]


def workloads(seed: int):
    rng = np.random.default_rng(seed)
    small = [random_instance(rng, 3, 5) for _ in range(3)]
    return [
        ("welfare, 12 views x 40", _welfare_batch, [random_instance(rng, 4, 12, max_queries=6) for _ in range(40)]),
        ("welfare, 24 views x 10", _welfare_batch, [random_instance(rng, 6, 24, max_queries=8) for _ in range(10)]),
        ("simple MMF MW, eps 0.2 x 3", _mmf_batch, small),
        ("pf_exact, eps 0.15 x 1", _pf_batch, small[:1]),
    ]


def bench(fn, arg, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t = time.perf_counter()
        result = fn(arg)
        best = min(best, time.perf_counter() - t)
    return best, result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    backends = kernels.available()
    if "compiled" not in backends:
        print("compiled kernels are not built; only the Python backend is timed")
    prev = kernels.BACKEND
    print(f"{'workload':<30}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  same")
    try:
        for label, fn, arg in workloads(args.seed):
            times, results = {}, {}
            for b in backends:
                kernels.use(b)
                times[b], results[b] = bench(fn, arg, args.repeat)
            same = all(results[b] == results[backends[0]] for b in backends)
            speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
            cells = "".join(f"{times[b]:>11.4f}s" for b in backends)
            print(f"{label:<30}{cells}{speed:>9.1f}x  {'yes' if same else 'NO'}")
    finally:
        kernels.use(prev)


if __name__ == "__main__":
    main()
