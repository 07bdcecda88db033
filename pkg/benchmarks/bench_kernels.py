"""Time the compiled and numpy product-integration kernels.

    python benchmarks/bench_kernels.py [--sizes 500 1000 2000] [--repeat 3] [--order EXPR]

Both backends get the same variable-order kernel powers and data; the
table shows the best wall time per backend and the largest difference.
"""
import argparse
import time

import numpy as np

from fracvar import kernels
from fracvar.fracops import Grid, OrderFunction, _powers


def _case(n, lines, seed, expr):
    rng = np.random.default_rng(seed)
    g = Grid(0.0, 1.0, n)
    order = OrderFunction(expr, 0.0, 1.0)
    nodes = g.nodes
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    P = np.ascontiguousarray(_powers(order, nodes[:, None], mids[None, :], False))
    Y = rng.standard_normal((lines, n + 1))
    return P, Y, g.h, np.arange(n + 1)


def _best(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 1000, 2000, 3000])
    ap.add_argument("--lines", type=int, default=1, help="rows of data integrated together")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--order", default="0.3 + 0.4*t*tau + 0.1*sin(5*tau)",
                    help="order expression in t, tau")
    args = ap.parse_args(argv)

    names = sorted(kernels.BACKENDS)
    print(f"backends: {', '.join(names)} (default {kernels.BACKEND}), "
          f"threads={kernels.thread_count() or 'auto'}, order={args.order}")
    print(f"{'n':>6} " + " ".join(f"{b + ' [s]':>12}" for b in names) + f" {'speedup':>8} {'max diff':>10}")
    for n in args.sizes:
        P, Y, h, rows = _case(n, args.lines, n, args.order)
        res = {}
        for b in names:
            res[b] = _best(lambda b=b: kernels.left_product_integrate(P, Y, h, rows, backend=b), args.repeat)
        line = f"{n:>6} " + " ".join(f"{res[b][0]:>12.4f}" for b in names)
        if len(names) == 2:
            speed = res["python"][0] / res["cython"][0]
            diff = float(np.max(np.abs(res["python"][1] - res["cython"][1])))
            line += f" {speed:>8.2f} {diff:>10.2e}"
        print(line)


if __name__ == "__main__":
    main()
