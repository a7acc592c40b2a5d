# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: collision bracket and memory-kernel contraction.

Signatures mirror qboltz._kernels_py exactly; the dispatch module picks
whichever is importable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos

cnp.import_array()


def collision_bracket(
    cnp.int64_t[::1] k1e,
    cnp.int64_t[::1] k2e,
    cnp.int64_t[::1] k3e,
    cnp.int64_t[::1] k4e,
    cnp.float64_t[::1] wk,
    cnp.float64_t[::1] f,
    cnp.float64_t[::1] fb,
    Py_ssize_t n_modes,
):
    cdef Py_ssize_t e, n = k1e.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.zeros(n_modes)
    cdef cnp.float64_t[::1] out = out_arr
    cdef double gain, loss
    cdef Py_ssize_t a, b, c, d
    for e in range(n):
        a = k1e[e]; b = k2e[e]; c = k3e[e]; d = k4e[e]
        gain = f[c] * f[d] * fb[a] * fb[b]
        loss = f[a] * f[b] * fb[c] * fb[d]
        out[a] += wk[e] * (gain - loss)
    return out_arr


def memory_bracket_sum(
    cnp.int64_t[::1] k1e,
    cnp.int64_t[::1] k2e,
    cnp.int64_t[::1] k3e,
    cnp.int64_t[::1] k4e,
    cnp.float64_t[::1] delta_e,
    cnp.float64_t[::1] kv,
    cnp.float64_t[:, ::1] f_hist,
    cnp.float64_t[:, ::1] fb_hist,
    cnp.float64_t[::1] taus,
    cnp.float64_t[::1] s_weights,
    Py_ssize_t n_modes,
):
    cdef Py_ssize_t e, j, n = k1e.shape[0], n_hist = taus.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.zeros(n_modes)
    cdef cnp.float64_t[::1] out = out_arr
    cdef double bracket, tau, sw
    cdef Py_ssize_t a, b, c, d
    for j in range(n_hist):
        tau = taus[j]
        sw = s_weights[j]
        if sw == 0.0:
            continue
        for e in range(n):
            a = k1e[e]; b = k2e[e]; c = k3e[e]; d = k4e[e]
            bracket = (
                f_hist[j, a] * f_hist[j, b] * fb_hist[j, c] * fb_hist[j, d]
                - f_hist[j, d] * f_hist[j, c] * fb_hist[j, b] * fb_hist[j, a]
            )
            out[a] += sw * cos(tau * delta_e[e]) * kv[e] * bracket
    return out_arr
