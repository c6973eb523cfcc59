"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N] [--points N] [--queries N]

Prints one line per (kernel, backend) with the best wall time over the
repeats, and checks that both backends return the same answers.
"""

import argparse
import sys
import time

import numpy as np

from steer._backend import available


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--points", type=int, default=400)
    ap.add_argument("--queries", type=int, default=400)
    ap.add_argument("--dim", type=int, default=5)
    ap.add_argument("--k", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available()
    if "compiled" not in backends:
        print("compiled kernels are not built; only the numpy fallback is available", file=sys.stderr)

    rng = np.random.default_rng(args.seed)
    X = rng.normal(size=(args.points, args.dim))
    Q = rng.normal(size=(args.queries, args.dim)) * 1.1
    tau = 1e-6 * float(np.ptp(X, axis=0).max())
    pooled = rng.normal(size=(args.points * 5, args.dim))
    C0 = pooled[rng.choice(pooled.shape[0], args.k, replace=False)]

    results = {}
    for name, kern in sorted(backends.items()):
        t_hull, hull = best_of(lambda: kern.hull_residuals(X, Q, tau, 2000, 1e-10), args.repeat)
        t_lloyd, lloyd = best_of(lambda: kern.lloyd(pooled, C0, 300, 1e-8), args.repeat)
        results[name] = (t_hull, hull, t_lloyd, lloyd)
        inside = int((hull[0] <= tau).sum())
        print(f"hull_residuals  {name:9s} {t_hull * 1e3:9.2f} ms  ({args.queries} queries, {inside} inside)")
        print(f"lloyd           {name:9s} {t_lloyd * 1e3:9.2f} ms  ({pooled.shape[0]} points, k={args.k}, "
              f"{lloyd[2]} iterations)")

    if len(results) == 2:
        py, cy = results["python"], results["compiled"]
        same_hull = np.array_equal(py[1][0] <= tau, cy[1][0] <= tau)
        same_lloyd = np.array_equal(py[3][1], cy[3][1])
        print(f"speed-up: hull x{py[0] / cy[0]:.1f}, lloyd x{py[2] / cy[2]:.1f}; "
              f"membership agrees: {same_hull}, labels agree: {same_lloyd}")
        if not (same_hull and same_lloyd):
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
