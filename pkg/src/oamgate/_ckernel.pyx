# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled three-layer kernel. Same contract as ``_kernel_py.three_layer_grad``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()

ctypedef double complex cplx


cdef inline cplx cexpi(double x) nogil:
    return cos(x) + 1j * sin(x)


cdef void _idft(const cplx[::1] x, cplx[::1] out, const cplx[::1] tw, int K) noexcept nogil:
    # out[n] = (1/K) sum_q x[q] w^{qn}, w = exp(2 pi i / K)
    cdef int n, q, r
    cdef cplx acc
    for n in range(K):
        acc = 0
        r = 0
        for q in range(K):
            acc = acc + x[q] * tw[r]
            r += n
            if r >= K:
                r -= K
        out[n] = acc / K


cdef void _grad_pass(const cplx[:, ::1] gam, const cplx[:, ::1] a, const cplx[:, ::1] b,
                     const cplx[::1] egk, const long[::1] enc, const long[::1] ks,
                     const cplx[::1] e1, const cplx[::1] e3, const cplx[::1] tw,
                     int K, double[::1] d1, double[::1] d3, double[::1] dg,
                     cplx[::1] gc1, cplx[::1] gc3) noexcept nogil:
    cdef int N = gam.shape[0]
    cdef int nk = ks.shape[0]
    cdef int i, j, k, q, n, r
    cdef cplx acc, s_ab, g, w
    for n in range(K):
        gc1[n] = 0
        gc3[n] = 0
        dg[n] = 0.0
    for k in range(nk):
        s_ab = 0
        for i in range(N):
            # d/dC1 entries: sum_j gam_ij conj(eg_k b_kj)
            acc = 0
            for j in range(N):
                g = gam[i, j]
                acc = acc + g * (egk[k] * b[k, j]).conjugate()
                s_ab = s_ab + g.conjugate() * a[i, k] * b[k, j]
            gc1[(enc[i] - ks[k] + K) % K] += acc
        for j in range(N):
            acc = 0
            for i in range(N):
                acc = acc + (a[i, k] * egk[k]).conjugate() * gam[i, j]
            gc3[(ks[k] - enc[j] + K) % K] += acc
        dg[ks[k]] = (1j * egk[k] * s_ab).real
    for q in range(K):
        # conj(fft(gc)[q]) with fft(x)[q] = sum_n x[n] w^{-qn}
        acc = 0
        s_ab = 0
        r = 0
        for n in range(K):
            w = tw[r].conjugate()
            acc = acc + gc1[n] * w
            s_ab = s_ab + gc3[n] * w
            r += q
            if r >= K:
                r -= K
        d1[q] = (1j / K * e1[q] * acc.conjugate()).real
        d3[q] = (1j / K * e3[q] * s_ab.conjugate()).real


def three_layer_grad(const cplx[::1] e1, const cplx[::1] e3, const cplx[::1] eg, const long[::1] enc,
                     const long[::1] ks, const cplx[:, ::1] U):
    cdef int K = e1.shape[0]
    cdef int N = enc.shape[0]
    cdef int nk = ks.shape[0]
    cdef int i, j, k, n
    cdef cplx acc, t
    cdef double s = 0.0, u = 0.0, F, P, at2

    tw_np = np.empty(K, dtype=np.complex128)
    cdef cplx[::1] tw = tw_np
    for n in range(K):
        tw[n] = cexpi(2.0 * M_PI * n / K)

    C1_np = np.empty(K, dtype=np.complex128)
    C3_np = np.empty(K, dtype=np.complex128)
    cdef cplx[::1] C1 = C1_np
    cdef cplx[::1] C3 = C3_np
    _idft(e1, C1, tw, K)
    _idft(e3, C3, tw, K)

    a_np = np.empty((N, nk), dtype=np.complex128)
    b_np = np.empty((nk, N), dtype=np.complex128)
    egk_np = np.empty(nk, dtype=np.complex128)
    cdef cplx[:, ::1] a = a_np
    cdef cplx[:, ::1] b = b_np
    cdef cplx[::1] egk = egk_np
    for k in range(nk):
        egk[k] = eg[ks[k]]
        for i in range(N):
            a[i, k] = C1[(enc[i] - ks[k] + K) % K]
            b[k, i] = C3[(ks[k] - enc[i] + K) % K]

    V_np = np.empty((N, N), dtype=np.complex128)
    cdef cplx[:, ::1] V = V_np
    t = 0
    for i in range(N):
        for j in range(N):
            acc = 0
            for k in range(nk):
                acc = acc + a[i, k] * egk[k] * b[k, j]
            V[i, j] = acc
            t = t + U[i, j].conjugate() * acc
            s += acc.real * acc.real + acc.imag * acc.imag
            u += U[i, j].real * U[i, j].real + U[i, j].imag * U[i, j].imag

    zF = [np.zeros(K), np.zeros(K), np.zeros(K)]
    zP = [np.zeros(K), np.zeros(K), np.zeros(K)]
    if s == 0.0:
        return V_np, 0.0, 0.0, tuple(zF), tuple(zP)
    at2 = t.real * t.real + t.imag * t.imag
    F = at2 / (u * s)
    P = s / N

    gF_np = np.empty((N, N), dtype=np.complex128)
    gP_np = np.empty((N, N), dtype=np.complex128)
    cdef cplx[:, ::1] gF = gF_np
    cdef cplx[:, ::1] gP = gP_np
    for i in range(N):
        for j in range(N):
            gF[i, j] = 2.0 * t * U[i, j] / (u * s) - 2.0 * at2 / (u * s * s) * V[i, j]
            gP[i, j] = 2.0 * V[i, j] / N

    gc1_np = np.empty(K, dtype=np.complex128)
    gc3_np = np.empty(K, dtype=np.complex128)
    _grad_pass(gF, a, b, egk, enc, ks, e1, e3, tw, K, zF[0], zF[1], zF[2], gc1_np, gc3_np)
    _grad_pass(gP, a, b, egk, enc, ks, e1, e3, tw, K, zP[0], zP[1], zP[2], gc1_np, gc3_np)
    return V_np, F, P, tuple(zF), tuple(zP)
