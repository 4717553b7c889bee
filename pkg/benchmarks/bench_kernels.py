#!/usr/bin/env python3
"""Throughput comparison of the numba kernels against the numpy fallbacks.

Run with the package installed:

    python3 benchmarks/bench_kernels.py [--repeats 5]

The numba path needs SUPLID_NO_NUMBA unset; both paths always run here
(the fallback functions are importable regardless of the dispatch flag).
"""

import argparse
import time

import numpy as np

from suplid import _kernels
from suplid.superpixel import SlicParams, rgb_to_lab, slic_segment


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_knn(repeats):
    rng = np.random.default_rng(0)
    cases = [
        ("knn 2.6k x 1.6k, D=304, k=400",
         rng.standard_normal((2621, 304)), rng.standard_normal((1600, 304)), 400),
        ("knn 5k x 5k, D=64, k=100",
         rng.standard_normal((5000, 64)), rng.standard_normal((5000, 64)), 100),
    ]
    for name, q, p, k in cases:
        t_np = timeit(lambda: _kernels._knn_sq_topk_numpy(q, p, k), repeats)
        if _kernels.NUMBA_ENABLED:
            _kernels._knn_sq_topk_numba(q, p, k, False)  # warm compile
            t_nb = timeit(lambda: _kernels._knn_sq_topk_numba(q, p, k, False), repeats)
            a = _kernels._knn_sq_topk_numba(q, p, k, False)
            b = _kernels._knn_sq_topk_numpy(q, p, k)
            assert np.allclose(a, b, rtol=1e-10, atol=1e-10)
            print(f"{name:40s} numpy {t_np * 1e3:8.1f} ms   "
                  f"numba {t_nb * 1e3:8.1f} ms   speedup {t_np / t_nb:5.2f}x")
        else:
            print(f"{name:40s} numpy {t_np * 1e3:8.1f} ms   (numba disabled)")


def bench_slic(repeats):
    rng = np.random.default_rng(1)
    h, w = 1024, 512
    g = np.linspace(0, 255, w).astype(np.uint8)
    image = np.stack([np.tile(g, (h, 1))] * 3, axis=-1)
    lab = rgb_to_lab(image)
    params = SlicParams()
    spacing = np.sqrt(h * w / ((h * w) // params.pixels_per_superpixel))
    gy = max(1, round(h / spacing))
    gx = max(1, round(w / spacing))
    ys = ((np.arange(gy) + 0.5) * h / gy).astype(np.int64)
    xs = ((np.arange(gx) + 0.5) * w / gx).astype(np.int64)
    centers = np.zeros((gy * gx, 5))
    idx = 0
    for y in ys:
        for x in xs:
            centers[idx] = (y, x, *lab[y, x])
            idx += 1

    t_np = timeit(lambda: _kernels._slic_assign_numpy(lab, centers, spacing, 10.0),
                  repeats)
    if _kernels.NUMBA_ENABLED:
        _kernels._slic_assign_numba(lab, centers, spacing, 10.0)
        t_nb = timeit(lambda: _kernels._slic_assign_numba(lab, centers, spacing, 10.0),
                      repeats)
        a = _kernels._slic_assign_numba(lab, centers, spacing, 10.0)
        b = _kernels._slic_assign_numpy(lab, centers, spacing, 10.0)
        assert np.array_equal(a, b)
        print(f"{'slic assign 1024x512':40s} numpy {t_np * 1e3:8.1f} ms   "
              f"numba {t_nb * 1e3:8.1f} ms   speedup {t_np / t_nb:5.2f}x")
    else:
        print(f"{'slic assign 1024x512':40s} numpy {t_np * 1e3:8.1f} ms   (numba disabled)")

    t_full = timeit(lambda: slic_segment(image, params), 1)
    print(f"{'slic full pipeline 1024x512':40s} {t_full * 1e3:8.1f} ms")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    print(f"numba enabled: {_kernels.NUMBA_ENABLED}")
    bench_knn(args.repeats)
    bench_slic(args.repeats)


if __name__ == "__main__":
    main()
