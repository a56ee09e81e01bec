# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the 3x3 convolution and the boundary-distance scan.

Every function here has a numpy twin in :mod:`rlaug._pykernels` with the
same signature; :mod:`rlaug.kernels` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
cimport scipy.linalg.cython_blas as blas

ctypedef fused real:
    float
    double


cdef void _im2col(real[:, :, ::1] x, real[:, ::1] cols) noexcept nogil:
    # cols[(ci*3 + ky)*3 + kx, r*W + c] = x[ci, r + ky - 1, c + kx - 1] (0 outside)
    cdef Py_ssize_t Ci = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t ci, ky, kx, r, c, row, sr
    for ci in range(Ci):
        for ky in range(3):
            for kx in range(3):
                row = (ci * 3 + ky) * 3 + kx
                for r in range(H):
                    sr = r + ky - 1
                    if sr < 0 or sr >= H:
                        for c in range(W):
                            cols[row, r * W + c] = 0
                        continue
                    for c in range(W):
                        if c + kx - 1 < 0 or c + kx - 1 >= W:
                            cols[row, r * W + c] = 0
                        else:
                            cols[row, r * W + c] = x[ci, sr, c + kx - 1]


cdef void _col2im_add(real[:, ::1] cols, real[:, :, ::1] gx) noexcept nogil:
    cdef Py_ssize_t Ci = gx.shape[0], H = gx.shape[1], W = gx.shape[2]
    cdef Py_ssize_t ci, ky, kx, r, c, row, sr, c0, c1
    for ci in range(Ci):
        for ky in range(3):
            for kx in range(3):
                row = (ci * 3 + ky) * 3 + kx
                c0 = 1 - kx if kx < 1 else 0
                c1 = W + 1 - kx if kx > 1 else W
                for r in range(H):
                    sr = r + ky - 1
                    if sr < 0 or sr >= H:
                        continue
                    for c in range(c0, c1):
                        gx[ci, sr, c + kx - 1] += cols[row, r * W + c]


cdef void _gemm(char *ta, char *tb, int m, int n, int k, real *a, int lda,
                real *b, int ldb, real beta, real *c, int ldc) noexcept nogil:
    # column-major C = op(A) @ op(B) + beta * C
    cdef float one_f = 1.0, beta_f
    cdef double one_d = 1.0, beta_d
    if real is float:
        beta_f = beta
        blas.sgemm(ta, tb, &m, &n, &k, &one_f, a, &lda, b, &ldb, &beta_f, c, &ldc)
    else:
        beta_d = beta
        blas.dgemm(ta, tb, &m, &n, &k, &one_d, a, &lda, b, &ldb, &beta_d, c, &ldc)


def conv3x3_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] w, real[::1] b):
    """3x3 convolution, stride 1, zero padding 1. x is (N, Ci, H, W)."""
    cdef Py_ssize_t N = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Co = w.shape[0]
    if w.shape[1] != Ci or w.shape[2] != 3 or w.shape[3] != 3 or b.shape[0] != Co:
        raise ValueError("conv3x3_forward: weight/bias shape does not match input")
    dtype = np.float32 if real is float else np.float64
    out_arr = np.empty((N, Co, H, W), dtype=dtype)
    cols_arr = np.empty((Ci * 9, H * W), dtype=dtype)
    cdef real[:, :, :, ::1] y = out_arr
    cdef real[:, ::1] cols = cols_arr
    cdef int HW = <int>(H * W), K = <int>(Ci * 9), CO = <int>Co
    cdef Py_ssize_t n, co, p
    if N == 0:
        return out_arr
    with nogil:
        for n in range(N):
            _im2col(x[n], cols)
            for co in range(Co):
                for p in range(H * W):
                    y[n, co, p // W, p % W] = b[co]
            # y[n] (Co x HW) += w (Co x K) @ cols (K x HW)
            _gemm(b"N", b"N", HW, CO, K, &cols[0, 0], HW, &w[0, 0, 0, 0], K,
                  1.0, &y[n, 0, 0, 0], HW)
    return out_arr


def conv3x3_backward(real[:, :, :, ::1] x, real[:, :, :, ::1] w, real[:, :, :, ::1] gy):
    """Gradients of conv3x3_forward: returns (grad_input, grad_weight, grad_bias)."""
    cdef Py_ssize_t N = x.shape[0], Ci = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Co = w.shape[0]
    if gy.shape[0] != N or gy.shape[1] != Co or gy.shape[2] != H or gy.shape[3] != W:
        raise ValueError("conv3x3_backward: output gradient shape mismatch")
    dtype = np.float32 if real is float else np.float64
    gx_arr = np.zeros((N, Ci, H, W), dtype=dtype)
    gw_arr = np.zeros((Co, Ci, 3, 3), dtype=dtype)
    gb_arr = np.zeros(Co, dtype=dtype)
    cols_arr = np.empty((Ci * 9, H * W), dtype=dtype)
    gcols_arr = np.empty((Ci * 9, H * W), dtype=dtype)
    cdef real[:, :, :, ::1] gx = gx_arr
    cdef real[:, :, :, ::1] gw = gw_arr
    cdef real[::1] gb = gb_arr
    cdef real[:, ::1] cols = cols_arr
    cdef real[:, ::1] gcols = gcols_arr
    cdef int HW = <int>(H * W), K = <int>(Ci * 9), CO = <int>Co
    cdef Py_ssize_t n, co, r, c
    cdef double acc
    if N == 0:
        return gx_arr, gw_arr, gb_arr
    with nogil:
        for co in range(Co):
            acc = 0.0
            for n in range(N):
                for r in range(H):
                    for c in range(W):
                        acc = acc + gy[n, co, r, c]
            gb[co] = <real>acc
        for n in range(N):
            _im2col(x[n], cols)
            # gw (Co x K) += gy[n] (Co x HW) @ cols^T (HW x K)
            _gemm(b"T", b"N", K, CO, HW, &cols[0, 0], HW, &gy[n, 0, 0, 0], HW,
                  1.0, &gw[0, 0, 0, 0], K)
            # gcols (K x HW) = w^T (K x Co) @ gy[n] (Co x HW)
            _gemm(b"N", b"T", HW, K, CO, &gy[n, 0, 0, 0], HW, &w[0, 0, 0, 0], K,
                  0.0, &gcols[0, 0], HW)
            _col2im_add(gcols, gx[n])
    return gx_arr, gw_arr, gb_arr


def min_sq_dists(cnp.int64_t[:, ::1] a, cnp.int64_t[:, ::1] b):
    """For each point in ``a`` the squared Euclidean distance to the nearest point of ``b``."""
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], i, j
    if nb == 0:
        raise ValueError("min_sq_dists: empty target set")
    out_arr = np.empty(na, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef cnp.int64_t best, dr, dc, d, ar, ac
    with nogil:
        for i in range(na):
            ar = a[i, 0]
            ac = a[i, 1]
            best = -1
            for j in range(nb):
                dr = ar - b[j, 0]
                dc = ac - b[j, 1]
                d = dr * dr + dc * dc
                if best < 0 or d < best:
                    best = d
                    if d == 0:
                        break
            out[i] = best
    return out_arr
