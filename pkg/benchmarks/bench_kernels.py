"""Compare the compiled and numpy kernel backends.

Times the row-root kernel on random instances and one full solve per
backend, checks that both give the same answer and prints a table::

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from qotlimit import kernels
from qotlimit.analytic import make_family
from qotlimit.qot import solve


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_row_roots(backend, n0, n1, d, repeat, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n0, d))
    y = rng.uniform(size=(n1, d))
    b = rng.normal(scale=0.01, size=n1)
    w = np.full(n1, 1.0 / n1)
    tgt = np.full(n0, 1e-3)
    guess = np.full(n0, np.nan)
    k = kernels.get_backend(backend)
    return best_of(lambda: k.row_roots(x, y, b, w, tgt, guess)[0], repeat)


def bench_solve(backend, d, n, eps, repeat):
    pair = make_family("identity", d=d, n=n)
    return best_of(lambda: solve(pair.rho0, pair.rho1, eps, tol=1e-8, keep_plan=False,
                                 backend=backend).value, repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    names = kernels.available_backends()
    cases = [("row_roots d=1 1000x1000", lambda b: bench_row_roots(b, 1000, 1000, 1, args.repeat)),
             ("row_roots d=2 900x900", lambda b: bench_row_roots(b, 900, 900, 2, args.repeat)),
             ("solve d=1 n=1000 eps=1e-3", lambda b: bench_solve(b, 1, 1000, 1e-3, 1)),
             ("solve d=2 n=30 eps=1e-2", lambda b: bench_solve(b, 2, 30, 1e-2, 1))]
    print(f"{'case':30s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}"
          + f"{'max diff':>12s}")
    for label, fn in cases:
        res = {n: fn(n) for n in names}
        times = [res[n][0] for n in names]
        outs = [np.asarray(res[n][1], dtype=float) for n in names]
        diff = max(float(np.max(np.abs(o - outs[0]))) for o in outs)
        speed = res["python"][0] / res["cython"][0] if "cython" in res else float("nan")
        print(f"{label:30s}" + "".join(f"{t:12.4f}" for t in times) + f"{speed:10.1f}"
              + f"{diff:12.2e}")


if __name__ == "__main__":
    main()
