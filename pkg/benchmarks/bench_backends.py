"""Compare the compiled kernels with the numpy fallback.

Two views: per-kernel timings on shapes typical of a fit iteration, and the
wall time of a short end-to-end fit run in a subprocess under each
``GERVE_BACKEND`` setting. Usage::

    python3 benchmarks/bench_backends.py [--repeat 5] [--fit-iters 2000]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gerve import _kernels_py
from gerve.mixture import MixtureState
from gerve.objective import LOG_FLOOR

try:
    from gerve import _core
except ImportError:  # fallback-only install
    _core = None

FIT_SNIPPET = """
import time, numpy as np
from gerve import BACKEND
from gerve.metrics import MixtureSpec, gen_mixture_sample
from gerve.optimizer import fit
from gerve.presets import triangle_cluster
from dataclasses import replace
X = gen_mixture_sample(MixtureSpec.triangle(0.25), 6000, 1)
cfg = replace(triangle_cluster(7, seed=1).fit, T={T})
t = time.perf_counter()
fit(X, 7, cfg)
print(BACKEND, time.perf_counter() - t)
"""


def _problem(K, d, B, Be, seed=0):
    rng = np.random.default_rng(seed)
    state = MixtureState.from_arrays(rng.standard_normal((K, d)), [np.eye(d) * 2.0] * K)
    means, precs, log_norm, log_w = state.kernel_args()
    X = np.ascontiguousarray(rng.standard_normal((B, d)))
    Z = np.ascontiguousarray(rng.standard_normal((K, Be, d)))
    lo, hi = -5 * np.ones(d), 5 * np.ones(d)
    return {
        "data_moments": lambda m: m.data_moments(X, means, precs, log_norm),
        "entropy_moments": lambda m: m.entropy_moments(Z, means, precs, log_norm, log_w, lo, hi, LOG_FLOOR, 1.0),
        "mixture_logpdf": lambda m: m.mixture_logpdf(X, means, precs, log_norm, log_w),
    }


def kernel_table(repeat: int) -> None:
    print(f"{'kernel':<16} {'K':>3} {'d':>2} {'B':>5} {'python ms':>10} {'compiled ms':>12} {'speed-up':>9}")
    for K, d, B, Be in [(3, 2, 1000, 100), (7, 2, 1000, 100), (20, 2, 1000, 100), (5, 5, 1000, 100)]:
        for name, call in _problem(K, d, B, Be).items():
            n = 20
            tp = min(timeit.repeat(lambda: call(_kernels_py), number=n, repeat=repeat)) / n * 1e3
            if _core is None:
                print(f"{name:<16} {K:>3} {d:>2} {B:>5} {tp:>10.3f} {'n/a':>12} {'':>9}")
                continue
            tc = min(timeit.repeat(lambda: call(_core), number=n, repeat=repeat)) / n * 1e3
            print(f"{name:<16} {K:>3} {d:>2} {B:>5} {tp:>10.3f} {tc:>12.3f} {tp / tc:>8.1f}x")


def fit_table(iters: int) -> None:
    print(f"\nend-to-end fit: triangle data N=6000, K=7, T={iters}")
    times = {}
    for backend in ("python", "compiled"):
        env = dict(os.environ, GERVE_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, "-c", FIT_SNIPPET.format(T=iters)], env=env, capture_output=True, text=True
        )
        if proc.returncode != 0:
            print(f"  {backend:<9} unavailable ({proc.stderr.strip().splitlines()[-1]})")
            continue
        name, secs = proc.stdout.split()
        times[name] = float(secs)
        print(f"  {name:<9} {float(secs):8.2f} s  ({float(secs) / iters * 1e3:.3f} ms/iter)")
    if len(times) == 2:
        print(f"  speed-up  {times['python'] / times['compiled']:8.1f}x")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--fit-iters", type=int, default=2000)
    args = ap.parse_args()
    kernel_table(args.repeat)
    fit_table(args.fit_iters)


if __name__ == "__main__":
    main()
