#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Workloads mirror the hot paths: per-mention box alignment during batch
compilation, and union-IoU / LCS scoring during evaluation.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import random
import time

import numpy as np

from rexforge._kernels import _pykernels

try:
    from rexforge._kernels import _cykernels
except ImportError:
    _cykernels = None


def rand_box(rng):
    x1, x2 = sorted(rng.uniform(0, 100) for _ in range(2))
    y1, y2 = sorted(rng.uniform(0, 100) for _ in range(2))
    return [x1, y1, x2, y2]


def make_workloads(seed=13):
    rng = random.Random(seed)
    boxes = [rand_box(rng) for _ in range(200_000)]
    region_sets = [np.array([rand_box(rng) for _ in range(36)])
                   for _ in range(200)]
    targets = [rand_box(rng) for _ in range(20_000)]
    union_pairs = [(np.array([rand_box(rng) for _ in range(4)]),
                    np.array([rand_box(rng) for _ in range(4)]))
                   for _ in range(5_000)]
    lcs_pairs = [(np.array([rng.randint(0, 40) for _ in range(25)], dtype=np.intc),
                  np.array([rng.randint(0, 40) for _ in range(25)], dtype=np.intc))
                 for _ in range(5_000)]
    return boxes, region_sets, targets, union_pairs, lcs_pairs


def bench(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run(impl, workloads, repeat):
    boxes, region_sets, targets, union_pairs, lcs_pairs = workloads

    def iou_load():
        total = 0.0
        for i in range(0, len(boxes) - 1, 2):
            total += impl.iou(*boxes[i], *boxes[i + 1])
        return total

    def align_load():
        for i, target in enumerate(targets):
            impl.best_iou(*target, region_sets[i % len(region_sets)])

    def union_load():
        for a, b in union_pairs:
            impl.union_iou(a, b)

    def lcs_load():
        for a, b in lcs_pairs:
            impl.lcs_length(a, b)

    return {
        "iou (100k pairs)": bench(iou_load, repeat),
        "best_iou (20k x 36 regions)": bench(align_load, repeat),
        "union_iou (5k 4v4 sweeps)": bench(union_load, repeat),
        "lcs_length (5k 25-token pairs)": bench(lcs_load, repeat),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3,
                        help="timing repetitions, best-of is reported")
    args = parser.parse_args()

    workloads = make_workloads()
    pure = run(_pykernels, workloads, args.repeat)
    if _cykernels is None:
        print("compiled kernels unavailable; pure-Python timings only\n")
        for name, seconds in pure.items():
            print(f"{name:<32} {seconds * 1e3:9.1f} ms")
        return
    fast = run(_cykernels, workloads, args.repeat)
    print(f"{'kernel':<32} {'pure':>10} {'cython':>10} {'speedup':>9}")
    for name in pure:
        ratio = pure[name] / fast[name] if fast[name] > 0 else float("inf")
        print(f"{name:<32} {pure[name] * 1e3:8.1f}ms {fast[name] * 1e3:8.1f}ms "
              f"{ratio:8.1f}x")


if __name__ == "__main__":
    main()
