# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution/pooling kernels.

Contract-identical to ``rffid.nn.kernels_numpy``: float64 NCHW arrays, 3x3
kernels with stride 1 / zero padding 1, 2x2 max pooling with stride 2 and
first-in-row-major-order tie breaking.

Work is parallelized over the batch dimension with OpenMP; every thread
owns whole batch slices and cross-batch reductions are summed afterward in
fixed order, so results do not depend on the thread count.
"""

import numpy as np

cimport cython
from cython.parallel import prange

NAME = "cython"


def conv3x3_forward(x, w, b):
    cdef double[:, :, :, ::1] xp = np.pad(
        np.ascontiguousarray(x, dtype=np.float64), ((0, 0), (0, 0), (1, 1), (1, 1))
    )
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t nb = xp.shape[0], ci_n = xp.shape[1]
    cdef Py_ssize_t height = xp.shape[2] - 2, width = xp.shape[3] - 2
    cdef Py_ssize_t co_n = wv.shape[0]
    out = np.empty((nb, co_n, height, width))
    cdef double[:, :, :, ::1] y = out
    cdef Py_ssize_t bi, co, ci, kh, kw, h, i
    cdef double coeff, bias
    cdef double* yrow
    cdef const double* xrow
    with nogil:
        for bi in prange(nb, schedule="static"):
            for co in range(co_n):
                bias = bv[co]
                for h in range(height):
                    yrow = &y[bi, co, h, 0]
                    for i in range(width):
                        yrow[i] = bias
                for ci in range(ci_n):
                    for kh in range(3):
                        for kw in range(3):
                            coeff = wv[co, ci, kh, kw]
                            if coeff == 0.0:
                                continue
                            for h in range(height):
                                yrow = &y[bi, co, h, 0]
                                xrow = &xp[bi, ci, h + kh, kw]
                                for i in range(width):
                                    yrow[i] += coeff * xrow[i]
    return out


def conv3x3_backward(x, w, dy):
    cdef double[:, :, :, ::1] xp = np.pad(
        np.ascontiguousarray(x, dtype=np.float64), ((0, 0), (0, 0), (1, 1), (1, 1))
    )
    cdef double[:, :, :, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, :, ::1] dyv = np.ascontiguousarray(dy, dtype=np.float64)
    cdef double[:, :, :, ::1] dyp = np.pad(
        dyv, ((0, 0), (0, 0), (1, 1), (1, 1))
    )
    cdef Py_ssize_t nb = xp.shape[0], ci_n = xp.shape[1]
    cdef Py_ssize_t height = xp.shape[2] - 2, width = xp.shape[3] - 2
    cdef Py_ssize_t co_n = wv.shape[0]

    dx_arr = np.empty((nb, ci_n, height, width))
    dw_partial = np.zeros((nb, co_n, ci_n, 3, 3))
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, :, ::1] dwp = dw_partial
    cdef Py_ssize_t bi, co, ci, kh, kw, h, i
    cdef double coeff, d, a0, a1, a2
    cdef double* dxrow
    cdef const double* dyrow
    cdef const double* xrow

    with nogil:
        for bi in prange(nb, schedule="static"):
            # input gradient: correlation of padded dy with flipped weights
            for ci in range(ci_n):
                for h in range(height):
                    dxrow = &dx[bi, ci, h, 0]
                    for i in range(width):
                        dxrow[i] = 0.0
                for co in range(co_n):
                    for kh in range(3):
                        for kw in range(3):
                            coeff = wv[co, ci, 2 - kh, 2 - kw]
                            if coeff == 0.0:
                                continue
                            for h in range(height):
                                dxrow = &dx[bi, ci, h, 0]
                                dyrow = &dyp[bi, co, h + kh, kw]
                                for i in range(width):
                                    dxrow[i] += coeff * dyrow[i]
            # per-batch weight gradient partials, reduced in order afterwards
            for co in range(co_n):
                for ci in range(ci_n):
                    for kh in range(3):
                        for h in range(height):
                            dyrow = &dyv[bi, co, h, 0]
                            xrow = &xp[bi, ci, h + kh, 0]
                            a0 = 0.0
                            a1 = 0.0
                            a2 = 0.0
                            for i in range(width):
                                d = dyrow[i]
                                a0 = a0 + xrow[i] * d
                                a1 = a1 + xrow[i + 1] * d
                                a2 = a2 + xrow[i + 2] * d
                            dwp[bi, co, ci, kh, 0] += a0
                            dwp[bi, co, ci, kh, 1] += a1
                            dwp[bi, co, ci, kh, 2] += a2
    dw = dw_partial.sum(axis=0)
    db = np.ascontiguousarray(dy, dtype=np.float64).sum(axis=(0, 2, 3))
    return dx_arr, dw, db


def maxpool2x2_forward(x):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t nb = xv.shape[0], nc = xv.shape[1]
    cdef Py_ssize_t oh = xv.shape[2] // 2, ow = xv.shape[3] // 2
    y_arr = np.empty((nb, nc, oh, ow))
    idx_arr = np.empty((nb, nc, oh, ow), dtype=np.uint8)
    cdef double[:, :, :, ::1] y = y_arr
    cdef unsigned char[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t bi, ci, i, j
    cdef double best, v
    cdef unsigned char best_k
    with nogil:
        for bi in prange(nb, schedule="static"):
            for ci in range(nc):
                for i in range(oh):
                    for j in range(ow):
                        best = xv[bi, ci, 2 * i, 2 * j]
                        best_k = 0
                        v = xv[bi, ci, 2 * i, 2 * j + 1]
                        if v > best:
                            best = v
                            best_k = 1
                        v = xv[bi, ci, 2 * i + 1, 2 * j]
                        if v > best:
                            best = v
                            best_k = 2
                        v = xv[bi, ci, 2 * i + 1, 2 * j + 1]
                        if v > best:
                            best = v
                            best_k = 3
                        y[bi, ci, i, j] = best
                        idx[bi, ci, i, j] = best_k
    return y_arr, idx_arr


def maxpool2x2_backward(idx, dy, height, width):
    cdef unsigned char[:, :, :, ::1] iv = np.ascontiguousarray(idx, dtype=np.uint8)
    cdef double[:, :, :, ::1] dyv = np.ascontiguousarray(dy, dtype=np.float64)
    cdef Py_ssize_t nb = dyv.shape[0], nc = dyv.shape[1]
    cdef Py_ssize_t oh = dyv.shape[2], ow = dyv.shape[3]
    cdef Py_ssize_t h_out = height, w_out = width
    dx_arr = np.zeros((nb, nc, height, width))
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t bi, ci, i, j
    cdef unsigned char k
    with nogil:
        for bi in prange(nb, schedule="static"):
            for ci in range(nc):
                for i in range(oh):
                    for j in range(ow):
                        k = iv[bi, ci, i, j]
                        dx[bi, ci, 2 * i + (k >> 1), 2 * j + (k & 1)] = dyv[bi, ci, i, j]
    return dx_arr
