"""Times the compiled kernels against the numpy fallback.

Run: python3 benchmarks/bench_kernels.py [--repeats 20]
Both backends must agree bitwise; the table reports median wall time.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from semani import kernels
from semani.kernels import fallback


def _time(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    if kernels.BACKEND != "native":
        print("compiled backend unavailable; timing fallback against itself")
    rng = np.random.default_rng(0)

    # shapes mirror the training hot paths: 64x64 images, 8x8 token grids
    cells = rng.standard_normal((4096, 16))
    codebook = rng.standard_normal((256, 16))
    field = rng.random((64, 64))
    star = np.array(
        [[32 + 28 * np.cos(a), 32 + 28 * np.sin(a)] for a in np.linspace(0, 4 * np.pi, 10, endpoint=False)]
    )

    cases = [
        ("nearest_codes 4096x16 K=256", lambda impl: impl.nearest_codes(cells, codebook)),
        ("bilinear_resize 64->8", lambda impl: impl.bilinear_resize(field, 8, 8)),
        ("bilinear_resize 8->64", lambda impl: impl.bilinear_resize(field[:8, :8], 64, 64)),
        ("polygon_fill star 64x64", lambda impl: impl.polygon_fill(star, 64, 64)),
    ]

    print(f"active backend: {kernels.BACKEND}; repeats: {args.repeats}")
    header = f"{'kernel':<30} {'native (ms)':>12} {'fallback (ms)':>14} {'speedup':>8}  identical"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        native_out = call(kernels)
        fallback_out = call(fallback)
        same = np.array_equal(np.asarray(native_out), np.asarray(fallback_out))
        t_native = _time(lambda: call(kernels), args.repeats) * 1e3
        t_fallback = _time(lambda: call(fallback), args.repeats) * 1e3
        ratio = t_fallback / t_native if t_native > 0 else float("inf")
        print(f"{name:<30} {t_native:>12.3f} {t_fallback:>14.3f} {ratio:>7.1f}x  {same}")
        if not same:
            raise SystemExit(f"backend mismatch in {name}")


if __name__ == "__main__":
    main()
