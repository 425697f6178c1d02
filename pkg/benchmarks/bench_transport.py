"""Compare the compiled transportation kernel with the pure-Python fallback.

Usage: python benchmarks/bench_transport.py [sizes...]
"""

import sys
import time

import numpy as np

from drnm import _transport_py

try:
    from drnm import _transport as _transport_c
except ImportError:
    _transport_c = None


def bench(mod, instances, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for C, a, b in instances:
            mod.solve_transport(C, a, b)
        best = min(best, time.perf_counter() - t0)
    return best / len(instances)


def make_instances(rng, n, count):
    out = []
    for _ in range(count):
        C = rng.uniform(0, 10, (n, n + 1))
        a = rng.uniform(0.5, 5, n)
        b = rng.uniform(0.5, 5, n + 1)
        b *= a.sum() / b.sum()
        out.append((C, a, b))
    return out


def main():
    sizes = [int(s) for s in sys.argv[1:]] or [4, 8, 16, 32]
    rng = np.random.default_rng(0)
    print(f"{'n':>4} {'python':>12} {'cython':>12} {'speedup':>8}")
    for n in sizes:
        instances = make_instances(rng, n, max(20, 2000 // n))
        t_py = bench(_transport_py, instances)
        if _transport_c is None:
            print(f"{n:>4} {t_py * 1e6:>10.1f}us {'n/a':>12} {'n/a':>8}")
            continue
        t_c = bench(_transport_c, instances)
        # sanity: identical optima
        for C, a, b in instances[:5]:
            f1, _, _ = _transport_py.solve_transport(C, a, b)
            f2, _, _ = _transport_c.solve_transport(C, a, b)
            c1, c2 = (f1 * C).sum(), (f2 * C).sum()
            assert abs(c1 - c2) <= 1e-7 * max(1.0, abs(c1))
        print(f"{n:>4} {t_py * 1e6:>10.1f}us {t_c * 1e6:>10.1f}us {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
