#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure-numpy fallback.

Times the raw forward/backward kernels on the layer sizes this package
actually trains, then a short meta-training loop under each backend.
Run: python3 benchmarks/bench_backends.py
"""

import timeit

import numpy as np

from metamod import Arch, SumScheme, TrainConfig, bouncegrad_train, gen_sum_suite, use_backend
from metamod.backend import available_backends, get_backend
from metamod.nn import init_params

KERNEL_CASES = [
    # (layer sizes, batch)
    ((1, 16, 1), 16),
    ((1, 16, 16, 1), 1),
    ((1, 16, 16, 1), 16),
    ((1, 64, 64, 1), 1),
    ((1, 64, 64, 1), 16),
    ((7, 64, 32, 1), 32),
    ((279, 128), 128),
]


def bench_kernels():
    rng = np.random.default_rng(0)
    names = available_backends()
    print(f"{'arch':>18} {'batch':>5} " + " ".join(f"{n:>26}" for n in names) + "  speedup")
    for sizes, n in KERNEL_CASES:
        arch = Arch(sizes)
        params = init_params(arch, rng)
        X = np.ascontiguousarray(rng.uniform(-1, 1, (n, sizes[0])))
        h_act, o_act = arch._act_ids()
        per_backend = {}
        for name in names:
            k = get_backend(name)
            y, cache = k.forward_cached(sizes, h_act, o_act, params, X)
            dY = np.ascontiguousarray(y / y.size)
            reps = 2000
            fwd = timeit.timeit(lambda: k.forward(sizes, h_act, o_act, params, X),
                                number=reps) / reps
            bwd = timeit.timeit(lambda: k.backward(sizes, h_act, o_act, params, X, cache, dY),
                                number=reps) / reps
            per_backend[name] = (fwd, bwd)
        row = f"{str(sizes):>18} {n:>5} "
        for name in names:
            fwd, bwd = per_backend[name]
            row += f"  fwd {fwd * 1e6:7.2f}us bwd {bwd * 1e6:7.2f}us"
        if "python" in per_backend and "compiled" in per_backend:
            speed = (per_backend["python"][0] + per_backend["python"][1]) / (
                per_backend["compiled"][0] + per_backend["compiled"][1])
            row += f"  {speed:5.2f}x"
        print(row)


def bench_training(iterations=300):
    suite = gen_sum_suite(20, 16, 32, seed=0)
    spec = [("generic", Arch((1, 16, 1)), 5), ("generic", Arch((1, 16, 16, 1)), 5)]
    cfg = TrainConfig(outer_iterations=iterations, seed=0, log_every=iterations)
    print(f"\nmeta-training loop ({len(suite)} tasks x {iterations} iterations):")
    results = {}
    for name in available_backends():
        previous = use_backend(name)
        try:
            t0 = timeit.default_timer()
            _, _, log = bouncegrad_train(suite, SumScheme(), spec, cfg)
            dt = timeit.default_timer() - t0
        finally:
            use_backend(previous)
        results[name] = dt
        print(f"  {name:>9}: {dt:6.2f}s  (final mean train error {log[-1]['mean_train_error']:.2f})")
    if "python" in results and "compiled" in results:
        print(f"  speedup: {results['python'] / results['compiled']:.2f}x")


if __name__ == "__main__":
    bench_kernels()
    bench_training()
