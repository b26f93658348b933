# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: codebook search, mask resampling, polygon rasterization.

Semantics must stay bit-identical to ``semani.kernels.fallback``; the test
suite cross-checks both backends against brute-force oracles.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def nearest_codes(cnp.float64_t[:, ::1] x, cnp.float64_t[:, ::1] codebook):
    """Index of the nearest codebook row (squared L2) for each row of ``x``.

    Ties resolve to the lowest index.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t k = codebook.shape[0]
    if codebook.shape[1] != d:
        raise ValueError("dimension mismatch between inputs and codebook")
    if k == 0:
        raise ValueError("empty codebook")

    out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef Py_ssize_t i, j, c, best
    cdef double dist, diff, best_dist
    for i in range(n):
        best = 0
        best_dist = 0.0
        for j in range(d):
            diff = x[i, j] - codebook[0, j]
            best_dist += diff * diff
        for c in range(1, k):
            dist = 0.0
            for j in range(d):
                diff = x[i, j] - codebook[c, j]
                dist += diff * diff
                if dist > best_dist:
                    break
            if dist < best_dist:
                best_dist = dist
                best = c
        out[i] = best
    return out_arr


def bilinear_resize(cnp.float64_t[:, ::1] src, Py_ssize_t out_h, Py_ssize_t out_w):
    """Resize ``src`` to (out_h, out_w) by bilinear sampling.

    Sample points follow the half-pixel convention (align_corners=False);
    coordinates are clamped at the borders.
    """
    cdef Py_ssize_t h = src.shape[0]
    cdef Py_ssize_t w = src.shape[1]
    if h == 0 or w == 0 or out_h <= 0 or out_w <= 0:
        raise ValueError("empty input or output")

    out_arr = np.empty((out_h, out_w), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] out = out_arr
    cdef double scale_y = h / <double>out_h
    cdef double scale_x = w / <double>out_w
    cdef Py_ssize_t i, j, y0, x0, y1, x1
    cdef double sy, sx, wy, wx
    for i in range(out_h):
        sy = (i + 0.5) * scale_y - 0.5
        if sy < 0.0:
            sy = 0.0
        if sy > h - 1:
            sy = h - 1
        y0 = <Py_ssize_t>sy
        y1 = y0 + 1 if y0 + 1 < h else y0
        wy = sy - y0
        for j in range(out_w):
            sx = (j + 0.5) * scale_x - 0.5
            if sx < 0.0:
                sx = 0.0
            if sx > w - 1:
                sx = w - 1
            x0 = <Py_ssize_t>sx
            x1 = x0 + 1 if x0 + 1 < w else x0
            wx = sx - x0
            out[i, j] = (
                src[y0, x0] * (1.0 - wy) * (1.0 - wx)
                + src[y0, x1] * (1.0 - wy) * wx
                + src[y1, x0] * wy * (1.0 - wx)
                + src[y1, x1] * wy * wx
            )
    return out_arr


def polygon_fill(cnp.float64_t[:, ::1] vertices, Py_ssize_t height, Py_ssize_t width):
    """Even-odd rasterization of a polygon onto pixel centers.

    ``vertices`` is (V, 2) in (x, y) order; pixel (r, c) has center (c, r).
    """
    cdef Py_ssize_t nv = vertices.shape[0]
    if nv < 3:
        raise ValueError("polygon needs at least 3 vertices")

    out_arr = np.zeros((height, width), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef Py_ssize_t r, c, e
    cdef double px, py, x0, y0, x1, y1, xc
    cdef bint inside
    for r in range(height):
        py = <double>r
        for c in range(width):
            px = <double>c
            inside = False
            for e in range(nv):
                x0 = vertices[e, 0]
                y0 = vertices[e, 1]
                x1 = vertices[(e + 1) % nv, 0]
                y1 = vertices[(e + 1) % nv, 1]
                if (y0 > py) != (y1 > py):
                    xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
                    if px < xc:
                        inside = not inside
            if inside:
                out[r, c] = 1
    return out_arr
