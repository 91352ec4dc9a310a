"""Compare the compiled and pure-Python kernels.

Usage::

    python benchmarks/bench_kernels.py [--iters 2000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from infeasalm import IalmOptions, qcqp_example, run_ialm
from infeasalm._backend import get_kernels


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_ialm(backend, iters, repeat):
    out = {}
    for alpha in (-1.0, 1.0):
        prog = qcqp_example(alpha, 1.0)
        opts = IalmOptions(max_outer_iter=iters, stop_on_convergence=False, backend=backend)
        out[f"ialm qcqp alpha={alpha:+g}"] = _best(lambda: run_ialm(prog, options=opts), repeat)
    return out


def bench_prox(backend, n_calls, repeat):
    k = get_kernels(backend)
    rng = np.random.default_rng(0)
    A = rng.normal(size=(6, 3))
    b = rng.normal(size=6)
    lams = rng.normal(size=(n_calls, 3))

    def run():
        for lam in lams:
            k.maxaffine_prox(A, b, lam, 1.0)

    return {f"maxaffine prox x{n_calls}": _best(run, repeat)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--prox-calls", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["python"]
    try:
        get_kernels("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled extension not built; timing the Python kernels only")
    results = {}
    for be in backends:
        r = bench_ialm(be, args.iters, args.repeat)
        r.update(bench_prox(be, args.prox_calls, args.repeat))
        results[be] = r
    print(f"{'case':32s}" + "".join(f"{be:>12s}" for be in backends) + ("     speedup" if len(backends) == 2 else ""))
    for case in results["python"]:
        row = f"{case:32s}" + "".join(f"{results[be][case]:11.3f}s" for be in backends)
        if len(backends) == 2:
            row += f"{results['python'][case] / results['cython'][case]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
