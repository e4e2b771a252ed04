# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: valid 1-D convolution, dense layers, max pooling and
embedding lookup/scatter, in float64.

Matrix products go straight to BLAS (dgemm) on views of the input, so the
convolution needs no im2col buffer; pooling and embedding are plain typed
loops, which beat numpy's fancy-indexing scatter by a wide margin.
Everything runs single-threaded so results are bit-reproducible.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _gemm_rm(bint ta, bint tb, int m, int n, int k,
                   double alpha, const double* a, int lda,
                   const double* b, int ldb,
                   double beta, double* c, int ldc) noexcept nogil:
    """Row-major C[m,n] = alpha * op(A)[m,k] @ op(B)[k,n] + beta * C.

    Fortran dgemm is column-major; swapping the operands computes the
    transposed product in place.  lda/ldb/ldc are row strides.
    """
    cdef char fa = b'T' if ta else b'N'
    cdef char fb = b'T' if tb else b'N'
    dgemm(&fb, &fa, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


def conv1d_fwd(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b):
    # x [B,L,C], w [O,C,K], b [O] -> y [B,T,O], T = L-K+1
    cdef Py_ssize_t nb = x.shape[0], length = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t o = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t t = length - k + 1
    y_arr = np.empty((nb, t, o))
    cdef double[:, :, ::1] y = y_arr
    # per-tap weight matrices, transposed to [C,O] and contiguous
    wt_arr = np.ascontiguousarray(np.asarray(w).transpose(2, 1, 0))  # [K,C,O]
    cdef double[:, :, ::1] wt = wt_arr
    cdef Py_ssize_t i, j, p, q
    with nogil:
        for i in range(nb):
            for p in range(t):
                for q in range(o):
                    y[i, p, q] = b[q]
            for j in range(k):
                _gemm_rm(0, 0, <int>t, <int>o, <int>c, 1.0,
                         &x[i, j, 0], <int>c,
                         &wt[j, 0, 0], <int>o,
                         1.0, &y[i, 0, 0], <int>o)
    return y_arr


def conv1d_bwd(double[:, :, ::1] x, double[:, :, ::1] w, double[:, :, ::1] dy):
    cdef Py_ssize_t nb = x.shape[0], length = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t o = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t t = length - k + 1
    dx_arr = np.zeros((nb, length, c))
    dwt_arr = np.zeros((k, o, c))  # [K,O,C], repacked to [O,C,K] at the end
    db_arr = np.zeros(o)
    cdef double[:, :, ::1] dx = dx_arr
    cdef double[:, :, ::1] dwt = dwt_arr
    cdef double[::1] db = db_arr
    wc_arr = np.ascontiguousarray(np.asarray(w).transpose(2, 0, 1))  # [K,O,C]
    cdef double[:, :, ::1] wc = wc_arr
    cdef Py_ssize_t i, j, p, q
    with nogil:
        for i in range(nb):
            for p in range(t):
                for q in range(o):
                    db[q] += dy[i, p, q]
            for j in range(k):
                # dx[i, j:j+t, :] += dy[i] @ w[:, :, j]
                _gemm_rm(0, 0, <int>t, <int>c, <int>o, 1.0,
                         &dy[i, 0, 0], <int>o,
                         &wc[j, 0, 0], <int>c,
                         1.0, &dx[i, j, 0], <int>c)
                # dw[:, :, j] += dy[i].T @ x[i, j:j+t, :]
                _gemm_rm(1, 0, <int>o, <int>c, <int>t, 1.0,
                         &dy[i, 0, 0], <int>o,
                         &x[i, j, 0], <int>c,
                         1.0, &dwt[j, 0, 0], <int>c)
    dw_arr = np.ascontiguousarray(dwt_arr.transpose(1, 2, 0))
    return dx_arr, dw_arr, db_arr


def dense_fwd(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    # x [B,F], w [O,F] -> y [B,O]
    cdef Py_ssize_t nb = x.shape[0], f = x.shape[1], o = w.shape[0]
    y_arr = np.empty((nb, o))
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t i, q
    with nogil:
        for i in range(nb):
            for q in range(o):
                y[i, q] = b[q]
        _gemm_rm(0, 1, <int>nb, <int>o, <int>f, 1.0,
                 &x[0, 0], <int>f, &w[0, 0], <int>f,
                 1.0, &y[0, 0], <int>o)
    return y_arr


def dense_bwd(double[:, ::1] x, double[:, ::1] w, double[:, ::1] dy):
    cdef Py_ssize_t nb = x.shape[0], f = x.shape[1], o = w.shape[0]
    dx_arr = np.empty((nb, f))
    dw_arr = np.zeros((o, f))
    db_arr = np.zeros(o)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t i, q
    with nogil:
        _gemm_rm(0, 0, <int>nb, <int>f, <int>o, 1.0,
                 &dy[0, 0], <int>o, &w[0, 0], <int>f,
                 0.0, &dx[0, 0], <int>f)
        _gemm_rm(1, 0, <int>o, <int>f, <int>nb, 1.0,
                 &dy[0, 0], <int>o, &x[0, 0], <int>f,
                 0.0, &dw[0, 0], <int>f)
        for i in range(nb):
            for q in range(o):
                db[q] += dy[i, q]
    return dx_arr, dw_arr, db_arr


def maxpool1d_fwd(double[:, :, ::1] x, Py_ssize_t window, Py_ssize_t stride):
    cdef Py_ssize_t nb = x.shape[0], length = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t t = (length - window) // stride + 1
    y_arr = np.empty((nb, t, c))
    pos_arr = np.empty((nb, t, c), dtype=np.int64)
    cdef double[:, :, ::1] y = y_arr
    cdef cnp.int64_t[:, :, ::1] pos = pos_arr
    cdef Py_ssize_t i, p, q, j, start, best_j
    cdef double best
    with nogil:
        for i in range(nb):
            for p in range(t):
                start = p * stride
                for q in range(c):
                    best = x[i, start, q]
                    best_j = start
                    for j in range(start + 1, start + window):
                        if x[i, j, q] > best:  # strict: first index wins ties
                            best = x[i, j, q]
                            best_j = j
                    y[i, p, q] = best
                    pos[i, p, q] = best_j
    return y_arr, pos_arr


def maxpool1d_bwd(double[:, :, ::1] dy, cnp.int64_t[:, :, ::1] pos, Py_ssize_t length):
    cdef Py_ssize_t nb = dy.shape[0], t = dy.shape[1], c = dy.shape[2]
    dx_arr = np.zeros((nb, length, c))
    cdef double[:, :, ::1] dx = dx_arr
    cdef Py_ssize_t i, p, q
    with nogil:
        for i in range(nb):
            for p in range(t):
                for q in range(c):
                    dx[i, pos[i, p, q], q] += dy[i, p, q]
    return dx_arr


def embedding_fwd(cnp.int64_t[:, ::1] ids, double[:, ::1] table):
    cdef Py_ssize_t nb = ids.shape[0], length = ids.shape[1], d = table.shape[1]
    out_arr = np.empty((nb, length, d))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, l, j, row
    with nogil:
        for i in range(nb):
            for l in range(length):
                row = ids[i, l]
                for j in range(d):
                    out[i, l, j] = table[row, j]
    return out_arr


def embedding_bwd(cnp.int64_t[:, ::1] ids, double[:, :, ::1] dy, Py_ssize_t vocab_size):
    cdef Py_ssize_t nb = ids.shape[0], length = ids.shape[1], d = dy.shape[2]
    dtable_arr = np.zeros((vocab_size, d))
    cdef double[:, ::1] dtable = dtable_arr
    cdef Py_ssize_t i, l, j, row
    with nogil:
        for i in range(nb):
            for l in range(length):
                row = ids[i, l]
                for j in range(d):
                    dtable[row, j] += dy[i, l, j]
    return dtable_arr
