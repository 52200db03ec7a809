# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled raster kernels. Same contracts as ``_kernels_py``; loops release the GIL."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def confusion(const unsigned char[:, ::1] gt, const unsigned char[:, ::1] pred, Py_ssize_t n):
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.zeros((n, n), np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(gt.shape[0]):
            for j in range(gt.shape[1]):
                o[gt[i, j], pred[i, j]] += 1
    return out


def pair_overlap(const unsigned char[:, ::1] a, Py_ssize_t ar, Py_ssize_t ac,
                 const unsigned char[:, ::1] b, Py_ssize_t br, Py_ssize_t bc, Py_ssize_t n):
    inter_arr = np.zeros(n, np.int64)
    area_a_arr = np.zeros(n, np.int64)
    area_b_arr = np.zeros(n, np.int64)
    cdef cnp.int64_t[::1] inter = inter_arr
    cdef cnp.int64_t[::1] area_a = area_a_arr
    cdef cnp.int64_t[::1] area_b = area_b_arr
    cdef Py_ssize_t i, j, r0, c0, r1, c1
    cdef unsigned char va
    with nogil:
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                area_a[a[i, j]] += 1
        for i in range(b.shape[0]):
            for j in range(b.shape[1]):
                area_b[b[i, j]] += 1
        r0 = ar if ar > br else br
        c0 = ac if ac > bc else bc
        r1 = ar + a.shape[0]
        if br + b.shape[0] < r1:
            r1 = br + b.shape[0]
        c1 = ac + a.shape[1]
        if bc + b.shape[1] < c1:
            c1 = bc + b.shape[1]
        for i in range(r0, r1):
            for j in range(c0, c1):
                va = a[i - ar, j - ac]
                if va == b[i - br, j - bc]:
                    inter[va] += 1
    return inter_arr, area_a_arr, area_b_arr


def paste(unsigned char[:, :] canvas, const unsigned char[:, ::1] local, Py_ssize_t r0, Py_ssize_t c0):
    cdef Py_ssize_t i, j
    cdef unsigned char v
    with nogil:
        for i in range(local.shape[0]):
            for j in range(local.shape[1]):
                v = local[i, j]
                if v != 0:
                    canvas[r0 + i, c0 + j] = v


def max_pool(const double[:, ::1] grid, Py_ssize_t k):
    cdef Py_ssize_t oh = grid.shape[0] // k, ow = grid.shape[1] // k
    out_arr = np.empty((oh, ow), np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, di, dj
    cdef double m, v
    with nogil:
        for i in range(oh):
            for j in range(ow):
                m = grid[i * k, j * k]
                for di in range(k):
                    for dj in range(k):
                        v = grid[i * k + di, j * k + dj]
                        if v > m:
                            m = v
                out[i, j] = m
    return out_arr


cdef inline void _coord(Py_ssize_t i, Py_ssize_t n_in, double scale,
                        Py_ssize_t *i0, Py_ssize_t *i1, double *f) noexcept nogil:
    cdef double s = (i + 0.5) * scale - 0.5
    if s < 0.0:
        s = 0.0
    if s > n_in - 1:
        s = n_in - 1
    i0[0] = <Py_ssize_t>floor(s)
    i1[0] = i0[0] + 1 if i0[0] + 1 < n_in else n_in - 1
    f[0] = s - i0[0]


def resize_bilinear(const double[:, ::1] grid, Py_ssize_t out_h, Py_ssize_t out_w):
    out_arr = np.empty((out_h, out_w), np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t in_h = grid.shape[0], in_w = grid.shape[1]
    cdef double sy = <double>in_h / out_h, sx = <double>in_w / out_w
    cdef Py_ssize_t i, j, y0, y1, x0, x1
    cdef double fy, fx, top, bot
    with nogil:
        for i in range(out_h):
            _coord(i, in_h, sy, &y0, &y1, &fy)
            for j in range(out_w):
                _coord(j, in_w, sx, &x0, &x1, &fx)
                top = grid[y0, x0] + fx * (grid[y0, x1] - grid[y0, x0])
                bot = grid[y1, x0] + fx * (grid[y1, x1] - grid[y1, x0])
                out[i, j] = top + fy * (bot - top)
    return out_arr


def resize_nearest(const unsigned char[:, ::1] m, Py_ssize_t out_h, Py_ssize_t out_w):
    out_arr = np.empty((out_h, out_w), np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    cdef Py_ssize_t in_h = m.shape[0], in_w = m.shape[1]
    cdef double sy = <double>in_h / out_h, sx = <double>in_w / out_w
    cdef Py_ssize_t i, j, r, c
    with nogil:
        for i in range(out_h):
            r = <Py_ssize_t>floor((i + 0.5) * sy)
            if r > in_h - 1:
                r = in_h - 1
            for j in range(out_w):
                c = <Py_ssize_t>floor((j + 0.5) * sx)
                if c > in_w - 1:
                    c = in_w - 1
                out[i, j] = m[r, c]
    return out_arr
