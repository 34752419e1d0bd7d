# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair-event kernel; see ``_rhs_py.rhs_kernel`` for the contract."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def rhs_kernel(double[::1] N, t):
    cdef Py_ssize_t cells = N.shape[0]
    cdef Py_ssize_t npairs = t.pi.shape[0]
    cdef const cnp.int64_t[::1] pi = t.pi
    cdef const cnp.int64_t[::1] pj = t.pj
    cdef const double[::1] rate = t.pair_rate
    cdef const double[::1] psum = t.psum
    cdef const cnp.uint8_t[::1] over = t.over.view(np.uint8)
    cdef const double[::1] ec = t.e_coag_pair
    cdef const cnp.int64_t[::1] c_lo = t.c_lo
    cdef const cnp.int64_t[::1] c_hi = t.c_hi
    cdef const double[::1] c_nlo = t.c_nlo
    cdef const double[::1] c_nhi = t.c_nhi
    cdef const cnp.int64_t[::1] b_m = t.b_m
    cdef const cnp.int64_t[::1] b_ilo = t.b_ilo
    cdef const cnp.int64_t[::1] b_ihi = t.b_ihi
    cdef const double[::1] b_w = t.b_w
    cdef const double[::1] b_plo = t.b_plo
    cdef const double[::1] b_phi = t.b_phi
    cdef const double[::1] full_lo = t.full_lo
    cdef const double[::1] full_hi = t.full_hi

    out = np.zeros(cells + 1)
    W_arr = np.zeros(cells + 1)
    cdef double[::1] dN = out
    cdef double[::1] W = W_arr
    cdef double R, Rc, Rb, lost = 0.0, acc, wtot = 0.0
    cdef Py_ssize_t p, i, j, m
    for p in range(npairs):
        i = pi[p]
        j = pj[p]
        R = rate[p] * N[i] * N[j]
        if R == 0.0:
            continue
        dN[i + 1] -= R
        dN[j + 1] -= R
        if over[p]:
            lost += R * psum[p]
            continue
        Rc = R * ec[p]
        dN[c_lo[p]] += Rc * c_nlo[p]
        dN[c_hi[p]] += Rc * c_nhi[p]
        Rb = R - Rc
        m = b_m[p]
        W[m] += Rb * b_w[p]
        dN[b_ilo[p]] += Rb * b_plo[p]
        dN[b_ihi[p]] += Rb * b_phi[p]

    acc = 0.0
    for m in range(cells, 0, -1):
        acc += W[m]
        # acc = sum of W over intervals strictly above m - 1
        dN[m - 1] += full_lo[m - 1] * acc
        dN[m] += full_hi[m - 1] * acc
    wtot = acc + W[0]
    return out, lost, wtot
