#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallbacks.

Run after an editable install:  python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from kinegraph import _kernels_py, model, training

try:
    from kinegraph import _kernels
except ImportError:
    _kernels = None


def timeit(fn, *args, repeat=200):
    fn(*args)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def row(name, slow_s, fast_s):
    speedup = slow_s / fast_s if fast_s else float("nan")
    print(f"{name:28s} numpy {slow_s * 1e6:10.1f} us   "
          f"compiled {fast_s * 1e6:10.1f} us   x{speedup:6.1f}")


def main():
    if _kernels is None:
        print("compiled extension not available; showing numpy timings only")
    rng = np.random.default_rng(0)
    a = rng.normal(size=(25, 25))
    a = np.ascontiguousarray(0.5 * (a + a.T))
    feats = np.ascontiguousarray(rng.normal(size=(25, 16)))

    print(f"{'kernel':28s} {'pure':>22s}   {'ext':>22s}")
    t_slow = timeit(_kernels_py.power_sum, a, 0.5, 8)
    t_fast = timeit(_kernels.power_sum, a, 0.5, 8) if _kernels else float("nan")
    row("power_sum v=25 k=8", t_slow, t_fast)

    t_slow = timeit(_kernels_py.diffuse_iter, a, feats, 0.5, 20)
    t_fast = timeit(_kernels.diffuse_iter, a, feats, 0.5, 20) if _kernels else float("nan")
    row("diffuse_iter v=25 K=20", t_slow, t_fast)

    t_slow = timeit(_kernels_py.jacobi_eigh, a, repeat=20)
    t_fast = timeit(_kernels.jacobi_eigh, a, repeat=20) if _kernels else float("nan")
    row("jacobi_eigh v=25", t_slow, t_fast)

    cfg = training.micro_config()
    ds = training.make_micro_dataset(0)
    params = model.init_params(cfg, 7)
    plan = training.build_plan(cfg, params, ds.templates)
    theta = training.flatten_params(params)
    slow_loss = _kernels_py.make_micro_loss(plan, ds.data, ds.labels)
    t_slow = timeit(slow_loss, theta, repeat=100)
    if _kernels:
        fast_loss = _kernels.make_micro_loss(plan, ds.data, ds.labels)
        t_fast = timeit(fast_loss, theta, repeat=1000)
    else:
        t_fast = float("nan")
    row("micro_loss (FD hot path)", t_slow, t_fast)
    if _kernels:
        per_step = 2 * theta.size * t_fast
        print(f"\nfinite-difference step ({theta.size} params): "
              f"{per_step * 1e3:.1f} ms compiled, "
              f"{2 * theta.size * t_slow * 1e3:.1f} ms pure")


if __name__ == "__main__":
    main()
