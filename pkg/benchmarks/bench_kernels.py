"""Compare the compiled imaging kernels against the numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--size 640x480] [--sigma 10] [--repeat 5]

Both backends produce byte-identical output; this script reports wall-clock
times for the blur and resize kernels plus the end-to-end region pipeline.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from disclip._kernels import _convolve_py, gaussian_kernel

try:
    from disclip._kernels import _convolve_ext
except ImportError:
    _convolve_ext = None


def timeit(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", default="640x480")
    parser.add_argument("--sigma", type=float, default=10.0)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    width, height = (int(v) for v in args.size.split("x"))
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    kernel = gaussian_kernel(args.sigma)

    backends = [("numpy", _convolve_py)]
    if _convolve_ext is not None:
        backends.append(("cython", _convolve_ext))
    else:
        print("compiled kernels not built; benchmarking the fallback only")

    print(f"image {width}x{height}, sigma {args.sigma} (kernel {len(kernel)} taps)")
    print(f"{'kernel':<22}" + "".join(f"{name:>12}" for name, _ in backends))

    rows = {
        f"blur sigma={args.sigma}": lambda impl: impl.blur(img, kernel),
        "resize -> 224x224": lambda impl: impl.resize_bilinear(img, 224, 224),
        "blur + resize": lambda impl: impl.resize_bilinear(impl.blur(img, kernel), 224, 224),
    }
    results = {}
    for label, op in rows.items():
        cells = []
        for name, impl in backends:
            best = timeit(lambda: op(impl), args.repeat)
            results[(label, name)] = best
            cells.append(f"{best * 1000:>10.1f}ms")
        print(f"{label:<22}" + "".join(cells))

    if _convolve_ext is not None:
        blur_key = f"blur sigma={args.sigma}"
        speedup = results[(blur_key, "numpy")] / results[(blur_key, "cython")]
        print(f"\nblur speedup (cython over numpy): {speedup:.1f}x")
        same = np.array_equal(
            _convolve_py.blur(img, kernel), _convolve_ext.blur(img, kernel)
        )
        print(f"outputs byte-identical: {same}")


if __name__ == "__main__":
    main()
