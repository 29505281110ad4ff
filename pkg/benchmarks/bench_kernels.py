"""Time the numba kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. The first numba call per
kernel is excluded so compilation does not count.
"""

import argparse
import time

import numpy as np

from riv import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--M", type=int, default=1000, help="sampled draws")
    ap.add_argument("--p", type=int, default=10, help="active instruments")
    ap.add_argument("--B", type=int, default=400, help="grid points")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    G = rng.normal(size=(args.M, args.p))
    g = rng.normal(1.0, 0.2, size=(args.M, args.p))
    grid = np.linspace(0.5, 1.5, args.B)
    thr = rng.uniform(0.05, 0.3, size=(args.p, args.B))

    cases = {
        "scan_intervals": lambda b: _kernels.scan_intervals(G, g, grid, thr, 0.3, backend=b),
        "bootstrap_max": lambda b: _kernels.bootstrap_max(G, g, grid, thr, backend=b),
    }
    print(f"M={args.M} p={args.p} B={args.B}")
    print(f"{'kernel':<16}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, run in cases.items():
        run("numba")
        t_np, out_np = best_of(lambda: run("numpy"), args.repeat)
        t_nb, out_nb = best_of(lambda: run("numba"), args.repeat)
        if isinstance(out_np, tuple):
            same = all(np.array_equal(a, b) for a, b in zip(out_np, out_nb))
        else:
            same = np.array_equal(out_np, out_nb)
        if not same:
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:<16}{t_np:>10.4f}{t_nb:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
