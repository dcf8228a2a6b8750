#!/usr/bin/env python3
"""Benchmark the jitted kernels against the plain NumPy fallback.

Runs this script twice in subprocesses (EPOCH_ACTIVE_BACKEND=numba / numpy),
times the hot kernels on representative workloads, and prints a comparison
table.  Usage:

    python benchmarks/bench_kernels.py            # orchestrate both backends
    python benchmarks/bench_kernels.py --worker   # single-backend timing run
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def time_call(fn, *args, repeat=5, min_time=0.05):
    fn(*args)  # warm (jit compile on the numba path)
    best = np.inf
    for _ in range(repeat):
        n_inner = 1
        while True:
            t0 = time.perf_counter()
            for _ in range(n_inner):
                fn(*args)
            dt = time.perf_counter() - t0
            if dt >= min_time or n_inner >= 1 << 20:
                best = min(best, dt / n_inner)
                break
            n_inner *= 4
    return best


def worker():
    from epoch_active import kernels
    from epoch_active._backend import BACKEND

    rng = np.random.default_rng(0)
    d = 4
    results = {"backend": BACKEND}

    X = rng.uniform(-1, 1, size=(2048, d))
    Y = rng.integers(0, 2, size=2048).astype(np.int64)
    W = np.full(2048, 1.0 / 2048)
    results["pgd_fit_2048x4"] = time_call(
        kernels.pgd_fit, np.zeros((1, d)), X, Y, W, 0, 0, 1.0, 200, 1.0,
        True, 1e-12)

    anchors = rng.uniform(-1, 1, size=(64, d))
    A = anchors.T @ anchors / 2
    lam, V = np.linalg.eigh(A)
    lam = np.clip(lam, 0, None)
    Vt = np.ascontiguousarray(V.T)
    C = np.zeros((1, d))
    G = np.ascontiguousarray(rng.normal(size=(1, d)))
    starts = rng.normal(size=(5, 1, d))
    results["dykstra_project"] = time_call(
        kernels.project_intersection, G * 3, C, V, Vt, lam, 0.3, 1.0, 100,
        1e-12)
    results["linear_dual_bound"] = time_call(
        kernels.linear_dual_bound, G, C, V, Vt, lam, 0.3, 1.0)
    results["disagree_ascent"] = time_call(
        kernels.ascend_linear, G, C, V, Vt, lam, 0.3, 1.0, starts, 200,
        1e-10, 100, 1e-11)
    results["risk_grad_2048x4"] = time_call(
        kernels.empirical_risk_grad, np.zeros((1, d)), X, Y, W, 0, 0)
    print(json.dumps(results))


def orchestrate():
    rows = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, EPOCH_ACTIVE_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--worker"],
            env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            raise SystemExit(1)
        rows[backend] = json.loads(proc.stdout.strip().splitlines()[-1])
    keys = [k for k in rows["numba"] if k != "backend"]
    width = max(len(k) for k in keys)
    print(f"{'kernel'.ljust(width)}  {'numba':>12}  {'numpy':>12}  speedup")
    for k in keys:
        t_nb, t_np = rows["numba"][k], rows["numpy"][k]
        print(f"{k.ljust(width)}  {t_nb * 1e6:>10.1f}us  {t_np * 1e6:>10.1f}us"
              f"  {t_np / t_nb:>6.1f}x")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--worker", action="store_true")
    args = parser.parse_args()
    if args.worker:
        worker()
    else:
        orchestrate()
