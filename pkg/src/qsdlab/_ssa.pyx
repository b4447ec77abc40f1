# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled SSA kernel; stream- and arithmetic-compatible with the fallback."""

from libc.math cimport INFINITY, log, pow

from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

import numpy as np

BACKEND = "cython"


def run_replica(bit_generator, int family, double p0, double p1, double p2, double p3,
                double K, long n0, double[::1] qsd_cdf, double t_max,
                double[::1] checkpoints, long[::1] states_out):
    """Simulate one replica; fills states_out per checkpoint.

    Same contract as the pure-Python kernel: one uniform for the optional
    initial-state sample, then (holding, direction) uniforms per event.
    """
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator")
    cdef long n, lo, hi, mid, ci, C
    cdef double t, t_new, nn, lam, mu, tot, u1, u2, x
    cdef bint censored = 0

    if n0 == 0:
        x = rng.next_double(rng.state)
        lo = 0
        hi = qsd_cdf.shape[0]
        while lo < hi:
            mid = (lo + hi) // 2
            if qsd_cdf[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        if lo > qsd_cdf.shape[0] - 1:
            lo = qsd_cdf.shape[0] - 1
        n = lo + 1
    else:
        n = n0

    t = 0.0
    ci = 0
    C = checkpoints.shape[0]
    while True:
        if n == 0:
            while ci < C:
                states_out[ci] = 0
                ci += 1
            return t, False
        nn = <double> n
        if family == 0:
            lam = nn * p0
            mu = nn * (p1 + nn / K)
        else:
            lam = nn * p0
            mu = nn * (p1 + p2 * pow(nn / K, p3))
        tot = lam + mu
        u1 = rng.next_double(rng.state)
        if u1 > 0.0:
            t_new = t + (-log(u1) / tot)
        else:
            t_new = INFINITY
        while ci < C and checkpoints[ci] < t_new:
            states_out[ci] = n
            ci += 1
        if t_new > t_max:
            return t_max, True
        u2 = rng.next_double(rng.state)
        if u2 * tot < lam:
            n += 1
        else:
            n -= 1
        t = t_new
