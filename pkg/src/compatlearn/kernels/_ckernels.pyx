# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: im2col/col2im, bilinear affine warp, pairwise distances.

Semantics mirror ``compatlearn.kernels.numpy_backend`` exactly; see that
module for the documented contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def im2col(double[:, :, :, ::1] x, int ksize, int stride, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t out_h = (h + 2 * pad - ksize) // stride + 1
    cdef Py_ssize_t out_w = (w + 2 * pad - ksize) // stride + 1
    cdef Py_ssize_t patch = c * ksize * ksize
    cols_arr = np.zeros((n, out_h * out_w, patch), dtype=np.float64)
    cdef double[:, :, ::1] cols = cols_arr
    cdef Py_ssize_t b, oi, oj, ci, ki, kj, ii, jj, p, q
    with nogil:
        for b in range(n):
            for oi in range(out_h):
                for oj in range(out_w):
                    p = oi * out_w + oj
                    for ci in range(c):
                        for ki in range(ksize):
                            ii = oi * stride + ki - pad
                            if ii < 0 or ii >= h:
                                continue
                            for kj in range(ksize):
                                jj = oj * stride + kj - pad
                                if jj < 0 or jj >= w:
                                    continue
                                q = (ci * ksize + ki) * ksize + kj
                                cols[b, p, q] = x[b, ci, ii, jj]
    return cols_arr


def col2im(double[:, :, ::1] cols, x_shape, int ksize, int stride, int pad):
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3]
    cdef Py_ssize_t out_h = (h + 2 * pad - ksize) // stride + 1
    cdef Py_ssize_t out_w = (w + 2 * pad - ksize) // stride + 1
    x_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] x = x_arr
    cdef Py_ssize_t b, oi, oj, ci, ki, kj, ii, jj, p, q
    with nogil:
        for b in range(n):
            for oi in range(out_h):
                for oj in range(out_w):
                    p = oi * out_w + oj
                    for ci in range(c):
                        for ki in range(ksize):
                            ii = oi * stride + ki - pad
                            if ii < 0 or ii >= h:
                                continue
                            for kj in range(ksize):
                                jj = oj * stride + kj - pad
                                if jj < 0 or jj >= w:
                                    continue
                                q = (ci * ksize + ki) * ksize + kj
                                x[b, ci, ii, jj] += cols[b, p, q]
    return x_arr


def affine_warp(double[:, :, ::1] img, double[:, ::1] matrix, double fill):
    cdef Py_ssize_t h = img.shape[0], w = img.shape[1], c = img.shape[2]
    cdef double m00 = matrix[0, 0], m01 = matrix[0, 1], m02 = matrix[0, 2]
    cdef double m10 = matrix[1, 0], m11 = matrix[1, 1], m12 = matrix[1, 2]
    out_arr = np.empty((h, w, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t r, col, ch, x0, y0, x1, y1
    cdef double xi, yi, fx, fy, w00, w01, w10, w11, v00, v01, v10, v11
    with nogil:
        for r in range(h):
            for col in range(w):
                xi = m00 * col + m01 * r + m02
                yi = m10 * col + m11 * r + m12
                x0 = <Py_ssize_t>floor(xi)
                y0 = <Py_ssize_t>floor(yi)
                fx = xi - x0
                fy = yi - y0
                x1 = x0 + 1
                y1 = y0 + 1
                w00 = (1.0 - fy) * (1.0 - fx)
                w01 = (1.0 - fy) * fx
                w10 = fy * (1.0 - fx)
                w11 = fy * fx
                for ch in range(c):
                    v00 = img[y0, x0, ch] if (0 <= y0 < h and 0 <= x0 < w) else fill
                    v01 = img[y0, x1, ch] if (0 <= y0 < h and 0 <= x1 < w) else fill
                    v10 = img[y1, x0, ch] if (0 <= y1 < h and 0 <= x0 < w) else fill
                    v11 = img[y1, x1, ch] if (0 <= y1 < h and 0 <= x1 < w) else fill
                    out[r, col, ch] = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11
    return out_arr


def pairwise_sqdist(double[:, ::1] queries, double[:, ::1] keys):
    cdef Py_ssize_t nq = queries.shape[0], nk = keys.shape[0], d = queries.shape[1]
    out_arr = np.empty((nq, nk), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    with nogil:
        for i in range(nq):
            for j in range(nk):
                acc = 0.0
                for k in range(d):
                    diff = queries[i, k] - keys[j, k]
                    acc += diff * diff
                out[i, j] = acc
    return out_arr
