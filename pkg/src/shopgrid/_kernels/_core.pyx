# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled factorization kernels: fused masked residuals + direct BLAS.

Same contract as ``numpy_backend``; see that module for the formulas.
The elementwise stages (masking, residuals, ridge sums) are fused into
single passes and the matrix products go straight to dgemm, avoiding the
temporaries the NumPy backend allocates.
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm

NAME = "cython"


cdef void _gemm(bint ta, bint tb,
                double[:, ::1] A, double[:, ::1] B, double[:, ::1] C,
                double alpha, double beta) noexcept nogil:
    """Row-major C = alpha * op(A) @ op(B) + beta * C.

    Implemented by evaluating the transposed product in column-major
    order, which is how the row-major buffers appear to Fortran BLAS.
    """
    cdef int m = C.shape[0]
    cdef int n = C.shape[1]
    cdef int k = A.shape[0] if ta else A.shape[1]
    cdef int lda = <int> A.shape[1]
    cdef int ldb = <int> B.shape[1]
    cdef int ldc = n
    cdef char fa = b'T' if tb else b'N'
    cdef char fb = b'T' if ta else b'N'
    if m == 0 or n == 0 or k == 0:
        return
    dgemm(&fa, &fb, &n, &m, &k, &alpha,
          &B[0, 0], &ldb, &A[0, 0], &lda, &beta, &C[0, 0], &ldc)


cdef double _masked_residual(double[:, ::1] target, double[:, ::1] mask,
                             double[:, ::1] product) noexcept nogil:
    """Overwrite ``product`` with mask o (product - target); return its squared norm."""
    cdef Py_ssize_t i, j
    cdef double e, acc = 0.0
    for i in range(product.shape[0]):
        for j in range(product.shape[1]):
            e = mask[i, j] * (product[i, j] - target[i, j])
            product[i, j] = e
            acc += e * e
    return acc


cdef double _residual(double[:, ::1] target, double[:, ::1] product) noexcept nogil:
    """Overwrite ``product`` with (product - target); return its squared norm."""
    cdef Py_ssize_t i, j
    cdef double e, acc = 0.0
    for i in range(product.shape[0]):
        for j in range(product.shape[1]):
            e = product[i, j] - target[i, j]
            product[i, j] = e
            acc += e * e
    return acc


cdef double _sq_norm(double[:, ::1] x) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double acc = 0.0
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            acc += x[i, j] * x[i, j]
    return acc


cdef double _sub_from(double[:, ::1] base, double[:, ::1] out) noexcept nogil:
    """Overwrite ``out`` with (base - out); return the squared norm of the result."""
    cdef Py_ssize_t i, j
    cdef double e, acc = 0.0
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            e = base[i, j] - out[i, j]
            out[i, j] = e
            acc += e * e
    return acc


cdef void _axpy(double a, double[:, ::1] x, double[:, ::1] y) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(y.shape[0]):
        for j in range(y.shape[1]):
            y[i, j] += a * x[i, j]


def objective(double[:, ::1] Rs, double[:, ::1] mask, double[:, ::1] Rm,
              double[:, ::1] Rl, double[:, ::1] V1, double[:, ::1] V2,
              double lam1, double lam2, double alpha, W=None):
    cdef Py_ssize_t r = Rl.shape[0]
    cdef Py_ssize_t n = V1.shape[0]
    cdef Py_ssize_t m = V2.shape[0]
    cdef double total
    cdef double[:, ::1] scratch, d, w_view

    scratch = np.empty((r, n))
    _gemm(False, True, Rl, V1, scratch, 1.0, 0.0)
    total = 0.5 * _masked_residual(Rs, mask, scratch)
    if lam1 != 0.0:
        scratch = np.empty((r, m))
        _gemm(False, True, Rl, V2, scratch, 1.0, 0.0)
        total += 0.5 * lam1 * _residual(Rm, scratch)
    if W is not None and alpha != 0.0:
        w_view = W
        d = np.empty((r, Rl.shape[1]))
        _gemm(True, False, w_view, Rl, d, 1.0, 0.0)
        total += 0.5 * alpha * _sub_from(Rl, d)
    if lam2 != 0.0:
        total += 0.5 * lam2 * (_sq_norm(Rl) + _sq_norm(V1) + _sq_norm(V2))
    return total


def gradients(double[:, ::1] Rs, double[:, ::1] mask, double[:, ::1] Rm,
              double[:, ::1] Rl, double[:, ::1] V1, double[:, ::1] V2,
              double lam1, double lam2, double alpha, W=None, bint literal=False):
    cdef Py_ssize_t r = Rl.shape[0]
    cdef Py_ssize_t l = Rl.shape[1]
    cdef Py_ssize_t n = V1.shape[0]
    cdef Py_ssize_t m = V2.shape[0]

    g_Rl_arr = np.empty((r, l))
    g_V1_arr = np.empty((n, l))
    cdef double[:, ::1] g_Rl = g_Rl_arr
    cdef double[:, ::1] g_V1 = g_V1_arr
    cdef double[:, ::1] g_V2
    cdef double[:, ::1] e, f, d, w_view

    e = np.empty((r, n))
    _gemm(False, True, Rl, V1, e, 1.0, 0.0)
    _masked_residual(Rs, mask, e)
    _gemm(False, False, e, V1, g_Rl, 1.0, 0.0)
    _gemm(True, False, e, Rl, g_V1, 1.0, 0.0)

    if lam1 != 0.0:
        g_V2_arr = np.empty((m, l))
        g_V2 = g_V2_arr
        f = np.empty((r, m))
        _gemm(False, True, Rl, V2, f, 1.0, 0.0)
        _residual(Rm, f)
        _gemm(False, False, f, V2, g_Rl, lam1, 1.0)
        _gemm(True, False, f, Rl, g_V2, lam1, 0.0)
    else:
        g_V2_arr = np.zeros((m, l))
        g_V2 = g_V2_arr

    if W is not None and alpha != 0.0:
        w_view = W
        d = np.empty((r, l))
        _gemm(True, False, w_view, Rl, d, 1.0, 0.0)
        _sub_from(Rl, d)
        if literal:
            _axpy(alpha * r, d, g_Rl)
        else:
            _axpy(alpha, d, g_Rl)
            _gemm(False, False, w_view, d, g_Rl, -alpha, 1.0)

    if lam2 != 0.0:
        _axpy(lam2, Rl, g_Rl)
        _axpy(lam2, V1, g_V1)
        _axpy(lam2, V2, g_V2)
    return g_Rl_arr, g_V1_arr, g_V2_arr
