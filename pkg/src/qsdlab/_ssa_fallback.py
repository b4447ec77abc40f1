"""Pure-Python SSA kernel, stream-compatible with the compiled one.

Both kernels consume uniform doubles from the same bit generator in the same
order and apply the same arithmetic expressions, so a run is bit-identical
whichever backend is active.
"""

import math

import numpy as np

BACKEND = "python"

_BUF = 8192


class _DoubleStream:
    """Buffered uniform doubles; order matches one next_double() call per draw."""

    def __init__(self, bit_generator):
        self._gen = np.random.Generator(bit_generator)
        self._buf = self._gen.random(_BUF)
        self._i = 0

    def next(self):
        if self._i >= len(self._buf):
            self._buf = self._gen.random(_BUF)
            self._i = 0
        v = self._buf[self._i]
        self._i += 1
        return v


def run_replica(bit_generator, family, p0, p1, p2, p3, K, n0, qsd_cdf, t_max, checkpoints, states_out):
    """Simulate one replica; fills states_out per checkpoint.

    Returns (extinction_time, censored).  family 0: logistic (p0=lam, p1=mu);
    family 1: power death (p0=a, p1=b, p2=cc, p3=p).  n0 == 0 samples the
    initial state from qsd_cdf (one uniform).
    """
    u = _DoubleStream(bit_generator)
    if n0 == 0:
        x = u.next()
        lo, hi = 0, len(qsd_cdf)
        while lo < hi:
            mid = (lo + hi) // 2
            if qsd_cdf[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        n = min(lo, len(qsd_cdf) - 1) + 1
    else:
        n = n0
    t = 0.0
    ci = 0
    C = len(checkpoints)
    while True:
        if n == 0:
            while ci < C:
                states_out[ci] = 0
                ci += 1
            return t, False
        nn = float(n)
        if family == 0:
            lam = nn * p0
            mu = nn * (p1 + nn / K)
        else:
            lam = nn * p0
            mu = nn * (p1 + p2 * (nn / K) ** p3)
        tot = lam + mu
        u1 = u.next()
        t_new = t + (-math.log(u1) / tot if u1 > 0.0 else math.inf)
        while ci < C and checkpoints[ci] < t_new:
            states_out[ci] = n
            ci += 1
        if t_new > t_max:
            return t_max, True
        u2 = u.next()
        if u2 * tot < lam:
            n += 1
        else:
            n -= 1
        t = t_new
