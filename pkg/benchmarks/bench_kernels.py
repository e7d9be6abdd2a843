#!/usr/bin/env python3
"""Times the compiled kernels against the pure-NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from specwb._kernels import _pure

try:
    from specwb._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def agreement(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    mask = np.isfinite(a) & np.isfinite(b)
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(a[mask] - b[mask])))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = parser.parse_args()

    if _core is None:
        print("compiled extension not built; run pip install -e . first")
        return 1

    rng = np.random.default_rng(0)
    scale = 0.25 if args.quick else 1.0

    n_spec = int(4000 * scale)
    n_bands = 200
    wl = np.linspace(400, 2400, n_bands)
    spectra = rng.uniform(0.01, 1.0, (n_spec, n_bands))

    n_pairs = int(4950 * scale)
    glm_x = rng.normal(0, 1, (n_pairs, 100))
    glm_y = (rng.uniform(size=100) > 0.5).astype(float)

    em = rng.uniform(0.05, 0.9, (40, 5)).T  # 5 endmembers x 40 bands
    design = em.T
    rhs = rng.uniform(0, 1, (int(20000 * scale), 40))

    cases = [
        (f"convex hull      {n_spec}x{n_bands}",
         lambda m: m.convex_hull_batch(wl, spectra)[0]),
        (f"segmented hull   {n_spec}x{n_bands}",
         lambda m: m.segmented_hull_batch(wl, spectra)[0]),
        (f"logistic IRLS    {n_pairs} pairs x 100",
         lambda m: m.logistic_irls_batch(glm_x, glm_y)[1]),
        (f"active-set NNLS  {rhs.shape[0]} solves 40x5",
         lambda m: m.nnls_batch(design, rhs)),
    ]

    print(f"{'kernel':34} {'pure':>9} {'compiled':>9} {'speedup':>8}  max |diff|")
    for label, call in cases:
        t_pure, out_pure = timeit(lambda: call(_pure))
        t_core, out_core = timeit(lambda: call(_core))
        diff = agreement(out_pure, out_core)
        print(f"{label:34} {t_pure:8.3f}s {t_core:8.3f}s {t_pure / t_core:7.1f}x  {diff:.3g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
