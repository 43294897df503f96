"""Compare the numba and numpy kernel backends on PEP solves and l1 projections.

    python3 benchmarks/bench_backends.py [--N 1 2 5 10] [--repeat 3]

Both backends run the same iteration, so values and iteration counts agree;
only wall time differs.  The first numba call includes JIT compilation (or a
cache load), so each configuration is timed after one warm-up solve.
"""

import argparse
import time

import numpy as np

from bregpep import kernels, pep, sdp
from bregpep.model import ProblemParams


def time_solve(conic, backend, repeat):
    sdp.solve(conic, sdp.SolverSettings(max_iter=50), backend=backend)  # warm-up
    best, res = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = sdp.solve(conic, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, res


def time_l1(backend, n, repeat):
    impl = kernels.get(backend)
    rng = np.random.default_rng(0)
    vs = [rng.standard_normal(n) * 3 for _ in range(200)]
    impl.project_l1_ball(vs[0], 1.0)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for v in vs:
            impl.project_l1_ball(v, 1.0)
        best = min(best, time.perf_counter() - t0)
    return best / len(vs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, nargs="+", default=[1, 2, 5, 10])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'N':>3} {'backend':>7} {'time[s]':>9} {'iters':>6} {'value':>14}")
    for N in args.N:
        conic, _, _ = pep.compile_program(pep.build_nolips_pep(ProblemParams(1.0, 1.0, N)))
        for backend in ("numba", "numpy"):
            t, res = time_solve(conic, backend, args.repeat)
            print(f"{N:>3} {backend:>7} {t:9.4f} {res.iterations:6d} {res.value:14.10f}")
    print()
    print(f"{'n':>6} {'backend':>7} {'us/proj':>9}")
    for n in (8, 64, 1024):
        for backend in ("numba", "numpy"):
            print(f"{n:>6} {backend:>7} {1e6 * time_l1(backend, n, args.repeat):9.2f}")


if __name__ == "__main__":
    main()
