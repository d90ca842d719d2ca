"""Compare the numba and numpy kernel backends.

Kernel timings call both implementations directly.  The end-to-end
``anneal`` timing runs in a subprocess per backend because the dispatch
is fixed at import time by ``MFARESTORE_NUMBA``.

    python benchmarks/bench_kernels.py [--size 256] [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mfarestore import _kernels
from mfarestore.psf import gaussian_psf

ANNEAL_SNIPPET = """
import time, numpy as np
from mfarestore import anneal, gaussian_psf, NoiseModel, MfaParams
g = np.random.default_rng(0).normal(10, 4, ({n}, {n}))
psf = gaussian_psf(2.0)
anneal(g[:16, :16], psf, NoiseModel(16.0), MfaParams(max_iterations=1))  # warm-up / JIT
t = time.perf_counter()
anneal(g, psf, NoiseModel(16.0), MfaParams(max_iterations=20))
print(time.perf_counter() - t)
"""


def best_of(fn, repeat):
    fn()  # compile or warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(n, repeat):
    rng = np.random.default_rng(0)
    w = gaussian_psf(2.0).weights
    r = w.shape[0] // 2
    padded = rng.normal(size=(n + 2 * r, n + 2 * r))
    qv_in = rng.normal(size=(n + 2, n + 2))
    a, b, c = rng.normal(size=(3, n, n))
    cases = {
        "correlate 17x17": lambda mod: getattr(_kernels, f"correlate_valid_{mod}")(padded, w),
        "qv terms": lambda mod: getattr(_kernels, f"qv_terms_{mod}")(qv_in),
        "qv adjoint": lambda mod: getattr(_kernels, f"qv_adjoint_{mod}")(a, b, c),
    }
    for name, call in cases.items():
        t_np = best_of(lambda: call("numpy"), repeat)
        if _kernels.correlate_valid_numba is None:
            yield name, t_np, float("nan")
            continue
        t_nb = best_of(lambda: call("numba"), repeat)
        yield name, t_np, t_nb


def anneal_time(n, flag):
    env = dict(os.environ, MFARESTORE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", ANNEAL_SNIPPET.format(n=n)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"{'case':<24}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    rows = list(kernel_rows(args.size, args.repeat))
    rows.append(("anneal 20 iters", anneal_time(args.size, "0"), anneal_time(args.size, "1")))
    for name, t_np, t_nb in rows:
        print(f"{name:<24}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
