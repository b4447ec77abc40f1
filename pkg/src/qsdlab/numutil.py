"""Small numerical helpers shared across modules."""

import math


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=60):
    """Adaptive Simpson quadrature of ``f`` on [a, b] to absolute tolerance ``tol``."""
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = abs(left + right - whole)
    # the roundoff floor keeps an unreachable absolute tolerance from
    # degenerating into a full-depth recursion tree
    floor = 4.0 * math.ulp(abs(left) + abs(right) + abs(whole))
    if depth <= 0 or err <= max(15.0 * tol, floor):
        return left + right + (left + right - whole) / 15.0
    return _simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _simpson_rec(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


def log_poisson_pmf(k, a):
    """log of the Poisson(a) probability at k, stable for large a."""
    if a <= 0.0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(a) - a - math.lgamma(k + 1.0)
