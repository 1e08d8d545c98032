"""Compare the compiled and numpy kernels.

    python3 benchmarks/bench_kernels.py [--m 4000] [--steps 500] [--repeat 5]

Prints the best wall time per backend and the max abs difference of the
outputs.
"""
import argparse
import time

import numpy as np

from ipfdyn import kernels


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, default=4000)
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    m, N, n, h = args.m, args.steps, args.n, 1e-3
    A = rng.normal(size=(n, n))
    x0 = rng.normal(size=(m, n))
    v = np.tile(-2 * x0.mean(axis=0), (N + 1, 1))
    sig = np.broadcast_to(0.1 * np.eye(n), (N, n, n)).copy()
    z = rng.standard_normal((m, N, n))
    a = rng.normal(size=(m, N + 1, n))
    w = np.broadcast_to(np.eye(n), (N + 1, n, n)).copy()

    backends = kernels.available_backends()
    print(f"m={m} steps={N} n={n}; backends: {', '.join(backends)}")
    results = {}
    for be in backends:
        t_em, (paths, _) = _best(lambda: kernels.em_linear(x0, A, v, sig, z, h, backend=be),
                                 args.repeat)
        t_ef, ef = _best(lambda: kernels.ef_path_integrals(a, w, h, backend=be), args.repeat)
        results[be] = (paths, ef)
        print(f"{be:>7}: em_linear {t_em * 1e3:9.2f} ms   ef_path_integrals {t_ef * 1e3:9.2f} ms")
    if len(results) == 2:
        (p0, e0), (p1, e1) = results.values()
        print(f"max |diff| paths {np.abs(p0 - p1).max():.3e}  ef {np.abs(e0 - e1).max():.3e}")


if __name__ == "__main__":
    main()
