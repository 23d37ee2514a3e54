"""Compare the numba and numpy implementations of the hot kernels.

    python3 benchmarks/bench_kernels.py [--n 18] [--repeat 5]

Both implementations are called directly from ``IMPLEMENTATIONS``, so the
``LATRED_JIT`` setting does not matter here. The first numba call (compile or
cache load) is excluded from the timings and reported separately.
"""

import argparse
import time
from functools import partial

import numpy as np

from latred import _kernels
from latred.harness import generate_instance


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(n, runs):
    sub = generate_instance("subset-selection", n, 1)
    yield "quad_values", lambda impl: impl["quad_values"](0.0, sub.lin, sub.Q)

    k = min(n, 14)
    ld = generate_instance("logdet", k, 2)
    base = np.zeros(k, dtype=np.bool_)
    free = np.arange(k, dtype=np.int64)
    yield "logdet_values", lambda impl: impl["logdet_values"](ld.spec.K, base, free)

    big = generate_instance("subset-selection", 200, 3)
    rng = np.random.default_rng(0)
    order = np.arange(200, dtype=np.int64)
    u = rng.random((runs, 200))
    lower = np.zeros(200, dtype=np.bool_)
    upper = np.ones(200, dtype=np.bool_)
    yield "double_greedy", lambda impl: impl["double_greedy"](big.lin, big.Q, lower, upper, order, u, True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=18, help="ground set size for the value-table kernels")
    ap.add_argument("--runs", type=int, default=200, help="greedy runs per call")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    if "numba" not in _kernels.IMPLEMENTATIONS:
        print("numba is not installed; nothing to compare")
        return
    py, jit = _kernels.IMPLEMENTATIONS["numpy"], _kernels.IMPLEMENTATIONS["numba"]
    print(f"{'kernel':<15}{'numpy s':>12}{'numba s':>12}{'speedup':>10}{'first call s':>14}  agree")
    for name, call in cases(args.n, args.runs):
        t0 = time.perf_counter()
        call(jit)
        warm = time.perf_counter() - t0
        t_np, out_np = _best_of(partial(call, py), args.repeat)
        t_nb, out_nb = _best_of(partial(call, jit), args.repeat)
        agree = np.allclose(out_np, out_nb, rtol=1e-9, atol=1e-9)
        print(f"{name:<15}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{warm:>14.3f}  {agree}")


if __name__ == "__main__":
    main()
