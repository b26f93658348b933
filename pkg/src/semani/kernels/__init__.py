"""Numeric kernels with a compiled core and a pure numpy fallback.

The compiled module is built at install time when a C toolchain is present;
otherwise the package transparently uses ``semani.kernels.fallback``.
``BACKEND`` reports which implementation is active.
"""

import numpy as np

from semani.kernels import fallback

try:
    from semani.kernels import _native as _impl

    BACKEND = "native"
except ImportError:
    _impl = fallback
    BACKEND = "fallback"


def _c64(arr: np.ndarray) -> np.ndarray:
    # the compiled signatures require C-contiguous float64
    return np.ascontiguousarray(arr, dtype=np.float64)


def nearest_codes(x: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Index of the nearest codebook row (squared L2); ties pick the lowest."""
    return _impl.nearest_codes(_c64(x), _c64(codebook))


def bilinear_resize(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel sample points and border clamping."""
    return _impl.bilinear_resize(_c64(src), out_h, out_w)


def polygon_fill(vertices: np.ndarray, height: int, width: int) -> np.ndarray:
    """Even-odd rasterization of a polygon onto integer pixel centers."""
    return _impl.polygon_fill(_c64(vertices), height, width)


__all__ = ["BACKEND", "bilinear_resize", "fallback", "nearest_codes", "polygon_fill"]
