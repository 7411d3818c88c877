"""Hot imaging kernels with a compiled core and a numpy fallback.

At import time this package selects the Cython extension when it was built
and otherwise the pure numpy twin. Both produce byte-identical images, so
the choice only affects speed; ``backend_name()`` reports which is active
and ``benchmarks/bench_kernels.py`` compares the two.
"""

from __future__ import annotations

import math

import numpy as np

from disclip._kernels import _convolve_py

try:
    from disclip._kernels import _convolve_ext as _impl
except ImportError:
    _impl = _convolve_py

blur = _impl.blur
resize_bilinear = _impl.resize_bilinear


def backend_name() -> str:
    """Name of the active kernel backend: 'cython' or 'numpy'."""
    return _impl.BACKEND


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ceil(3*sigma).

    sigma = 0 yields the identity kernel [1.0]. The normalized taps sum to
    1 within 1e-9 before any image quantization.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return np.ones(1, dtype=np.float64)
    radius = math.ceil(3.0 * sigma)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    return taps / taps.sum()
