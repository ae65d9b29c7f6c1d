# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: implicit-step assembly and lattice sweeps.

Same contracts as ``_kernels_py``; see that module for the array layout.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from libc.math cimport NAN

cnp.import_array()

BACKEND = "cython"

cdef enum:
    _CORRECTED = 0
    _PRINTED = 1

CORRECTED = _CORRECTED
PRINTED = _PRINTED


cdef void _boundary(const double[:, ::1] V, Py_ssize_t qb, Py_ssize_t qn,
                    const double[:, ::1] K, double cb,
                    double[:, ::1] R, double[:, :, ::1] Jb, double[:, :, ::1] Jn,
                    double* KVb, double* KG, double* G) noexcept nogil:
    cdef Py_ssize_t b = V.shape[1]
    cdef Py_ssize_t i, k
    for i in range(b):
        G[i] = V[qn, i] - V[qb, i]
    for i in range(b):
        KVb[i] = 0.0
        KG[i] = 0.0
        for k in range(b):
            KVb[i] += K[i, k] * V[qb, k]
            KG[i] += K[i, k] * G[k]
    for i in range(b):
        R[qb, i] = cb * (KVb[i] * G[i] - V[qb, i] * KG[i])
        for k in range(b):
            Jb[qb, i, k] = cb * K[i, k] * (G[i] + V[qb, i])
            Jn[qb, i, k] = -cb * V[qb, i] * K[i, k]
        Jb[qb, i, i] -= cb * (KVb[i] + KG[i])
        Jn[qb, i, i] += cb * KVb[i]


def assemble(const double[:, ::1] V, const double[:, ::1] Vprev, const double[:, ::1] K,
             double e, double ed, const double[::1] phi, const double[::1] y,
             double dy, double dt, int variant=CORRECTED, double inflow_sign=1.0,
             bint closure=True):
    cdef Py_ssize_t Q = V.shape[0]
    cdef Py_ssize_t b = V.shape[1]
    R_arr = np.empty((Q, b))
    lower_arr = np.zeros((Q, b, b))
    diag_arr = np.zeros((Q, b, b))
    upper_arr = np.zeros((Q, b, b))
    cdef double[:, ::1] R = R_arr
    cdef double[:, :, ::1] lower = lower_arr
    cdef double[:, :, ::1] diag = diag_arr
    cdef double[:, :, ::1] upper = upper_arr
    work = np.empty((5, b))
    cdef double[:, ::1] w = work
    cdef double* KV = &w[0, 0]
    cdef double* KL = &w[1, 0]
    cdef double* L = &w[2, 0]
    cdef double* S = &w[3, 0]
    cdef double* KV2 = &w[4, 0]
    cdef double cdiff = 1.0 / (e * e * dy * dy)
    cdef double adv, cb, s
    cdef Py_ssize_t q, i, k
    if variant == _PRINTED:
        cdiff *= 0.5
    with nogil:
        for q in range(1, Q - 1):
            adv = (ed / e) * y[q] / dy
            for i in range(b):
                S[i] = V[q + 1, i] + V[q - 1, i]
                L[i] = S[i] - 2.0 * V[q, i]
            for i in range(b):
                KV[i] = 0.0
                KL[i] = 0.0
                KV2[i] = 0.0
                for k in range(b):
                    KV[i] += K[i, k] * V[q, k]
                    KL[i] += K[i, k] * L[k]
                    KV2[i] += K[i, k] * V[q, k] * V[q, k]
            for i in range(b):
                if variant == _CORRECTED:
                    R[q, i] = ((V[q, i] - Vprev[q, i]) / dt - adv * (V[q + 1, i] - V[q, i])
                               - cdiff * (KV[i] * L[i] - V[q, i] * KL[i]))
                    for k in range(b):
                        diag[q, i, k] = -cdiff * (K[i, k] * L[i] + 2.0 * V[q, i] * K[i, k])
                    diag[q, i, i] += 1.0 / dt + adv + cdiff * (2.0 * KV[i] + KL[i])
                else:
                    R[q, i] = ((V[q, i] - Vprev[q, i]) / dt - adv * (V[q + 1, i] - V[q, i])
                               - cdiff * (KV[i] * S[i] - 2.0 * KV2[i] - V[q, i] * KL[i]))
                    for k in range(b):
                        diag[q, i, k] = -cdiff * (K[i, k] * S[i] - 4.0 * K[i, k] * V[q, k]
                                                  + 2.0 * V[q, i] * K[i, k])
                    diag[q, i, i] += 1.0 / dt + adv + cdiff * KL[i]
                for k in range(b):
                    lower[q, i, k] = cdiff * V[q, i] * K[i, k]
                    upper[q, i, k] = cdiff * V[q, i] * K[i, k]
                lower[q, i, i] -= cdiff * KV[i]
                upper[q, i, i] -= cdiff * KV[i] + adv

        cb = 1.0 / (e * dy)
        _boundary(V, 0, 1, K, cb, R, diag, upper, KV, KL, L)
        _boundary(V, Q - 1, Q - 2, K, cb, R, diag, lower, KV, KL, L)
        for i in range(b):
            R[Q - 1, i] += inflow_sign * (ed * V[Q - 1, i] - phi[i])
            diag[Q - 1, i, i] += inflow_sign * ed
        if closure:
            for k in range(2):
                q = 0 if k == 0 else Q - 1
                s = -1.0
                for i in range(b):
                    s += V[q, i]
                    diag[q, 0, i] += 1.0
                R[q, 0] += s
    return R_arr, lower_arr, diag_arr, upper_arr


def parameter_derivatives(const double[:, ::1] V, const double[:, ::1] K, double e,
                          double ed, const double[::1] y, double dy,
                          int variant=CORRECTED, double inflow_sign=1.0):
    cdef Py_ssize_t Q = V.shape[0]
    cdef Py_ssize_t b = V.shape[1]
    dRde_arr = np.zeros((Q, b))
    dRded_arr = np.zeros((Q, b))
    cdef double[:, ::1] dRde = dRde_arr
    cdef double[:, ::1] dRded = dRded_arr
    cdef double cdiff = 1.0 / (e * e * dy * dy)
    cdef double Ti, grad, KV, KL, KV2, Li, Si, Lk, G, Gk
    cdef Py_ssize_t q, i, k, qb, qn, side
    if variant == _PRINTED:
        cdiff *= 0.5
    with nogil:
        for q in range(1, Q - 1):
            for i in range(b):
                KV = 0.0
                KL = 0.0
                KV2 = 0.0
                for k in range(b):
                    Lk = V[q + 1, k] + V[q - 1, k] - 2.0 * V[q, k]
                    KV += K[i, k] * V[q, k]
                    KL += K[i, k] * Lk
                    KV2 += K[i, k] * V[q, k] * V[q, k]
                Si = V[q + 1, i] + V[q - 1, i]
                Li = Si - 2.0 * V[q, i]
                if variant == _CORRECTED:
                    Ti = KV * Li - V[q, i] * KL
                else:
                    Ti = KV * Si - 2.0 * KV2 - V[q, i] * KL
                grad = (V[q + 1, i] - V[q, i]) * y[q] / dy
                dRde[q, i] = (ed / (e * e)) * grad + (2.0 / e) * cdiff * Ti
                dRded[q, i] = -grad / e
        for side in range(2):
            if side == 0:
                qb = 0
                qn = 1
            else:
                qb = Q - 1
                qn = Q - 2
            for i in range(b):
                KV = 0.0
                KL = 0.0
                for k in range(b):
                    Gk = V[qn, k] - V[qb, k]
                    KV += K[i, k] * V[qb, k]
                    KL += K[i, k] * Gk
                G = V[qn, i] - V[qb, i]
                dRde[qb, i] = -(KV * G - V[qb, i] * KL) / (e * e * dy)
        for i in range(b):
            dRded[Q - 1, i] = inflow_sign * V[Q - 1, i]
    return dRde_arr, dRded_arr


def project(const double[:, ::1] Vt):
    cdef Py_ssize_t Q = Vt.shape[0]
    cdef Py_ssize_t b = Vt.shape[1]
    V_arr = np.empty((Q, b))
    s_arr = np.empty(Q)
    cdef double[:, ::1] V = V_arr
    cdef double[::1] s = s_arr
    cdef Py_ssize_t q, i
    cdef double x
    with nogil:
        for q in range(Q):
            s[q] = 0.0
            for i in range(b):
                x = Vt[q, i]
                V[q, i] = x if x > 0.0 else 0.0
                s[q] += V[q, i]
            for i in range(b):
                V[q, i] = V[q, i] / s[q] if s[q] > 0.0 else NAN
    return V_arr, s_arr


cdef inline double _splitmix(uint64_t seed, uint64_t counter) noexcept nogil:
    cdef uint64_t z = seed + (counter + 1) * <uint64_t>0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    return <double>(z >> 11) * (1.0 / 9007199254740992.0)


def splitmix_uniform(seed, counters):
    counters = np.ascontiguousarray(counters, dtype=np.uint64)
    out_arr = np.empty(counters.shape[0])
    cdef const uint64_t[::1] c = counters
    cdef double[::1] out = out_arr
    cdef uint64_t sd = <uint64_t>seed
    cdef Py_ssize_t j
    with nogil:
        for j in range(c.shape[0]):
            out[j] = _splitmix(sd, c[j])
    return out_arr


def lattice_sweeps(cnp.int64_t[::1] sites, const double[:, ::1] P, seed, int64_t counter0,
                   int64_t nsweeps):
    cdef Py_ssize_t L = sites.shape[0]
    cdef Py_ssize_t nb = L - 1
    cdef uint64_t sd = <uint64_t>seed
    cdef int64_t counter = counter0
    cdef int64_t j, attempts = 2 * nsweeps * nb
    cdef Py_ssize_t k
    cdef cnp.int64_t a, c
    if nb < 1:
        return counter
    with nogil:
        for j in range(attempts):
            k = <Py_ssize_t>(_splitmix(sd, <uint64_t>counter) * nb)
            if k >= nb:
                k = nb - 1
            a = sites[k]
            c = sites[k + 1]
            if _splitmix(sd, <uint64_t>(counter + 1)) < P[a, c]:
                sites[k] = c
                sites[k + 1] = a
            counter += 2
    return counter
