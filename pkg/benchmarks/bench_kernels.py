"""Time the numba and numpy flavours of every hot kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Each kernel is called once untimed (numba compiles or loads its cache), then
``--repeat`` times; the best wall time is reported as a markdown table.
"""
import argparse
import math
import time

import numpy as np

from krental.kernels import IMPLEMENTATIONS


def make_inputs(scale: float, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    N = max(10, int(200 * scale))
    M = max(100, int(20_000 * scale))
    k = 5
    arrival = np.sort(rng.uniform(0, 50, N))
    end = arrival + rng.uniform(1, 5, N)
    thresh = rng.uniform(0, 1, N)
    U = rng.random((M, N))
    unit = rng.integers(1, k + 1, N)
    value = end - arrival

    B = max(10, int(2000 * scale))
    lo = np.zeros((N, 2), np.int64)
    hi = np.zeros((N, 2), np.int64)
    units2 = np.zeros((N, 2), np.int64)
    a = rng.integers(0, B, N)
    b = rng.integers(0, B, N)
    lo[:, 0], hi[:, 0] = np.minimum(a, b), np.maximum(a, b) + 1
    hi[:, 0] = np.minimum(hi[:, 0], B)
    units2[:, 0] = unit
    rejected = rng.random(N) < 0.05

    L = max(10, int(1000 * scale))
    return {
        "independent_mc": (arrival, end, thresh, k, U),
        "limited_mc": (arrival, end, unit, thresh, value, k, U),
        "ocr_sweep": (arrival, end, rejected, lo, hi, units2, k, B, True),
        "phi_greedy_exact": (6.0, 1.0 / L, L, 1.0, 5.0 * (1 + 1e-9), 2.0 / 3.0, 1.0 / 3.0),
        "phi_greedy_literal": (6.0, 1.0 / L, L, 1.0, 5.0 * (1 + 1e-9), 2.0 / 3.0, 1.0 / 3.0),
    }


def best_time(fn, args, repeat: int) -> float:
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiplies every problem size")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    inputs = make_inputs(args.scale, args.seed)
    print("| kernel | numba (ms) | numpy (ms) | speed-up |")
    print("|---|---:|---:|---:|")
    for name, call_args in inputs.items():
        t_nb = best_time(IMPLEMENTATIONS["numba"][name], call_args, args.repeat)
        t_np = best_time(IMPLEMENTATIONS["numpy"][name], call_args, args.repeat)
        ratio = t_np / t_nb if t_nb > 0 else math.inf
        print(f"| {name} | {1e3 * t_nb:.2f} | {1e3 * t_np:.2f} | {ratio:.1f}x |")


if __name__ == "__main__":
    main()
