"""Pure numpy implementation of the hot imaging kernels.

This is the fallback used when the compiled extension is unavailable. The
arithmetic (tap order, expression shape, quantization) mirrors
``_convolve_ext.pyx`` exactly so both backends produce byte-identical
images.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def blur(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable convolution with clamp-to-edge borders on a uint8 image.

    `img` is (h, w, 3) uint8; `kernel` is a normalized, odd-length float64
    vector. Intermediate math stays in float64 between the two passes;
    quantization is floor(v + 0.5) clipped to [0, 255].
    """
    h, w, _ = img.shape
    radius = (len(kernel) - 1) // 2
    cols = np.arange(w)
    tmp = np.zeros((h, w, 3), dtype=np.float64)
    for t in range(len(kernel)):
        idx = np.clip(cols + (t - radius), 0, w - 1)
        tmp += kernel[t] * img[:, idx, :]
    rows = np.arange(h)
    acc = np.zeros((h, w, 3), dtype=np.float64)
    for t in range(len(kernel)):
        idx = np.clip(rows + (t - radius), 0, h - 1)
        acc += kernel[t] * tmp[idx, :, :]
    return np.clip(np.floor(acc + 0.5), 0.0, 255.0).astype(np.uint8)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a (h, w, 3) uint8 image to (out_h, out_w, 3).

    Output pixel centers map to input coordinates via
    ``src = (dst + 0.5) * (in / out) - 0.5`` with edge-clamped taps.
    """
    in_h, in_w, _ = img.shape
    scale_y = in_h / out_h
    scale_x = in_w / out_w

    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * scale_y - 0.5
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * scale_x - 0.5
    y0 = np.floor(sy)
    x0 = np.floor(sx)
    fy = (sy - y0)[:, None, None]
    fx = (sx - x0)[None, :, None]
    y0i = np.clip(y0.astype(np.int64), 0, in_h - 1)
    y1i = np.clip(y0.astype(np.int64) + 1, 0, in_h - 1)
    x0i = np.clip(x0.astype(np.int64), 0, in_w - 1)
    x1i = np.clip(x0.astype(np.int64) + 1, 0, in_w - 1)

    p00 = img[np.ix_(y0i, x0i)].astype(np.float64)
    p01 = img[np.ix_(y0i, x1i)].astype(np.float64)
    p10 = img[np.ix_(y1i, x0i)].astype(np.float64)
    p11 = img[np.ix_(y1i, x1i)].astype(np.float64)

    value = (1.0 - fy) * ((1.0 - fx) * p00 + fx * p01) + fy * ((1.0 - fx) * p10 + fx * p11)
    return np.clip(np.floor(value + 0.5), 0.0, 255.0).astype(np.uint8)
