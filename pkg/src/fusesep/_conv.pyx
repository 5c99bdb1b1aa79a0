# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled 3x3 'same' convolution kernels (float64, NCHW).

Images are zero padded and flattened row-major with row length ``W + 2``.
On that grid each of the nine taps is a shift by a constant offset, so a
convolution is nine BLAS matrix products over shifted, contiguous slices
(no patch matrix is materialised).
"""
import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _taps(double[:, :, ::1] src, double[:, :, ::1] taps, double[:, :, ::1] dst,
                Py_ssize_t Wp) noexcept nogil:
    # dst[n][:, q] += taps[t] @ src[n][:, q + off_t] over the interior range of q
    cdef int B = <int>src.shape[0], Ci = <int>src.shape[1], P = <int>src.shape[2]
    cdef int Co = <int>dst.shape[1]
    cdef int q0 = <int>Wp + 1
    cdef int L = P - 2 * q0
    cdef int n, t, off
    cdef double one = 1.0
    cdef char nn = b'N'
    for n in range(B):
        for t in range(9):
            off = (t // 3 - 1) * <int>Wp + (t % 3 - 1)
            # column-major view: dst^T (L x Co) += src^T (L x Ci) @ taps^T (Ci x Co)
            dgemm(&nn, &nn, &L, &Co, &Ci, &one,
                  &src[n, 0, q0 + off], &P,
                  &taps[t, 0, 0], &Ci,
                  &one, &dst[n, 0, q0], &P)


def _pad_flat(x):
    B, C, H, W = x.shape
    xp = np.zeros((B, C, H + 2, W + 2))
    xp[:, :, 1:H + 1, 1:W + 1] = x
    return xp.reshape(B, C, -1)


def _interior(yp, H, W):
    B, C = yp.shape[:2]
    return np.ascontiguousarray(yp.reshape(B, C, H + 2, W + 2)[:, :, 1:H + 1, 1:W + 1])


def conv3x3_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[2], W = x.shape[3], Co = w.shape[0]
    w_arr = np.asarray(w)
    taps = np.ascontiguousarray(w_arr.reshape(Co, w_arr.shape[1], 9).transpose(2, 0, 1))
    yp = np.zeros((B, Co, (H + 2) * (W + 2)))
    _taps(_pad_flat(np.asarray(x)), taps, yp, W + 2)
    y = _interior(yp, H, W)
    y += np.asarray(b)[None, :, None, None]
    return y


def conv3x3_backward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[:, :, :, ::1] gy):
    cdef Py_ssize_t B = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Co = w.shape[0]
    cdef int Wp = <int>(W + 2)
    w_arr = np.asarray(w)

    # input gradient: same correlation with the flipped, channel-transposed kernel
    flipped = w_arr[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(Ci, Co, 9)
    taps = np.ascontiguousarray(flipped.transpose(2, 0, 1))
    gyp_arr = _pad_flat(np.asarray(gy))
    gxp = np.zeros((B, Ci, (H + 2) * Wp))
    _taps(gyp_arr, taps, gxp, Wp)

    # weight gradient: gw[:, :, t] = sum_n gy_n @ shift_t(x_n)^T; the zero
    # border of the padded gy masks out-of-image products
    cdef double[:, :, ::1] xp = _pad_flat(np.asarray(x))
    cdef double[:, :, ::1] gyp = gyp_arr
    gt_arr = np.zeros((9, Co, Ci))
    cdef double[:, :, ::1] gt = gt_arr
    cdef int P = <int>xp.shape[2]
    cdef int q0 = Wp + 1
    cdef int L = P - 2 * q0
    cdef int n, t, off
    cdef int ci = <int>Ci, co = <int>Co
    cdef double one = 1.0
    cdef char tt = b'T'
    cdef char nn = b'N'
    with nogil:
        for n in range(<int>B):
            for t in range(9):
                off = (t // 3 - 1) * Wp + (t % 3 - 1)
                # column-major: gt^T (Ci x Co) += x^T(L x Ci)^T @ gy^T (L x Co)
                dgemm(&tt, &nn, &ci, &co, &L, &one,
                      &xp[n, 0, q0 + off], &P,
                      &gyp[n, 0, q0], &P,
                      &one, &gt[t, 0, 0], &ci)
    gw = np.ascontiguousarray(gt_arr.transpose(1, 2, 0).reshape(Co, Ci, 3, 3))
    gb = np.asarray(gy).sum(axis=(0, 2, 3))
    return _interior(gxp, H, W), gw, gb
