"""Extinction eigenvalue and eigenvector by the two-branch matching method,
with a symmetrized Sturm-bisection eigensolver as an independent oracle, the
Poincare spectral-gap lower bound, and the closed-form large-K eigenvalue.

The eigenvector is built as u0_n (1 + delta_n) below the equilibrium index and
as b (1 + w_n) above it; the matching determinant f pins the eigenvalue.  The
perturbations delta and w solve

  delta_n = -rho * sum_{m<n} Q_m / (lam_m pi_m u0_m u0_{m+1}),
      Q_m = sum_{j<=m} (u0_j)^2 pi_j (1 + delta_j),
  w_n    =  rho * sum_{j=q}^{n-1} (1/(lam_j pi_j)) sum_{p>j} pi_p (1 + w_p),

with q = n* - 1.  Both are exact variation-of-constants solutions of the
three-term eigenvalue recursion (forward substitution for delta; a short fixed
point for w, whose inner sum reaches above n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceFailure,
    NonPositiveCoefficient,
    NoSignChange,
    RhoOutOfRange,
)
from .model import CoefficientTable, Landmarks, RateModel

_BISECT_REL_WIDTH = 1e-15
_W_FIXED_POINT_TOL = 1e-15


@dataclass
class MatchingState:
    """Perturbation data at one rho: the two branches and their rho-derivative kernels."""

    rho: float
    delta: np.ndarray        # 1-based, defined on 1..n*
    w: np.ndarray            # 1-based, defined on n*-1..N (zero below)
    f_value: float
    Delta0: np.ndarray       # positive derivative kernel, |d delta/d rho| at 0
    W0: np.ndarray           # derivative kernel of w at 0
    delta_increment: float   # delta_{n*} - delta_{n*-1}


@dataclass
class SpectralSolution:
    rho0: float = math.nan
    log_rho0: float = math.nan
    phi: np.ndarray | None = None
    b: float = math.nan
    rho1: float | None = None
    gap_lb: float = math.nan
    residual: float = math.nan
    rho0_asymptotic: float = math.nan
    log_rho0_asymptotic: float = math.nan
    V: np.ndarray | None = None
    D_K: float = math.nan
    eta_K: float = math.nan
    oracle_rho0: float | None = None
    state: MatchingState | None = None


def solve_recursion(alpha, beta, h, w_q, w_q1, q, n_max):
    """Solve alpha_n w_{n+1} + beta_n w_{n-1} - (alpha_n+beta_n) w_n = h_n for
    q+1 <= n <= n_max-1 from the seeds w_q, w_{q+1}.

    Arrays are 1-based; the increment form w_{n+1}-w_n = A_{n+1} Theta_{n+1,q}
    is used with the Theta products carried in log space.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    h = np.asarray(h, dtype=float)
    used = slice(q, n_max)
    if np.any(alpha[used] <= 0.0) or np.any(beta[used] <= 0.0):
        raise NonPositiveCoefficient("alpha and beta must be strictly positive on [q, n_max]")
    w = np.full(n_max + 1, np.nan)
    w[q], w[q + 1] = w_q, w_q1
    log_theta = math.log(beta[q] / alpha[q])  # log Theta_{q+1,q}
    A = (w_q1 - w_q) * math.exp(-log_theta)
    for n in range(q + 1, n_max):
        # A_{n+1} - A_n = h_n / (alpha_n Theta_{n+1,q}) = h_n / (beta_n Theta_{n,q})
        A += h[n] / (beta[n] * math.exp(log_theta))
        log_theta += math.log(beta[n] / alpha[n])
        w[n + 1] = w[n] + A * math.exp(log_theta)
    return w


def _branch_weights(table: CoefficientTable):
    """rho-independent arrays for the delta recursion."""
    ns = table.n_star
    j = np.arange(1, ns + 1)
    with np.errstate(over="ignore"):
        pw = (table.u0[j] ** 2) * np.exp(table.log_pi[j])        # (u0_j)^2 pi_j
    m = np.arange(1, ns)
    cm = np.exp(-table.log_pi[m] - np.log(table.lam[m])) / (table.u0[m] * table.u0[m + 1])
    return pw, cm


def _delta_pass(table: CoefficientTable, rho: float):
    """Forward substitution for delta on 1..n*; returns (delta, last increment)."""
    ns = table.n_star
    pw, cm = _branch_weights(table)
    delta = np.zeros(ns + 1)
    Q = pw[0]
    S = 0.0
    inc = 0.0
    for n in range(2, ns + 1):
        inc = -rho * cm[n - 2] * Q
        S += cm[n - 2] * Q
        delta[n] = -rho * S
        Q += pw[n - 1] * (1.0 + delta[n])
    return delta, inc


def delta_kernel(table: CoefficientTable):
    """(Delta0 array, increment at n*): the rho-derivative kernel magnitudes at rho=0."""
    ns = table.n_star
    pw, cm = _branch_weights(table)
    D0 = np.zeros(ns + 1)
    Q = np.cumsum(pw)
    incs = cm * Q[:-1]
    D0[2:] = np.cumsum(incs)
    return D0, float(incs[-1])


def delta_cap(table: CoefficientTable) -> float:
    """Admissible |rho| bound for the lower branch: 1/(3 Delta0_{n*})."""
    D0, _ = delta_kernel(table)
    return 1.0 / (3.0 * D0[table.n_star])


def delta_of_rho(table: CoefficientTable, landmarks: Landmarks, rho: float) -> np.ndarray:
    """Lower-branch perturbation delta(rho) on 1..n* (1-based array)."""
    if abs(rho) >= delta_cap(table):
        raise RhoOutOfRange(f"|rho|={abs(rho):.3e} outside the delta contraction range")
    delta, _ = _delta_pass(table, rho)
    return delta


def W0_kernel(table: CoefficientTable) -> np.ndarray:
    """W0_n = sum_{j=n*-1}^{n-1} tail_j/(lam_j pi_j), the dw/drho kernel at 0."""
    ns, N = table.n_star, table.N
    j = np.arange(ns - 1, N)
    T = np.exp(table.log_tail[j] - table.log_pi[j] - np.log(table.lam[j]))
    W0 = np.zeros(N + 1)
    W0[ns:] = np.cumsum(T)[: N - ns + 1]
    return W0


def w_sup_bound(table: CoefficientTable) -> float:
    """Upper estimate of sup_n W0_n, continuing the table by its mu-tail integral."""
    W0 = W0_kernel(table)
    return float(W0[table.N] + 2.0 * table.inv_mu_tail)


def w_cap(table: CoefficientTable) -> float:
    return 1.0 / (3.0 * w_sup_bound(table))


def w_of_rho(table: CoefficientTable, landmarks: Landmarks, rho: float) -> np.ndarray:
    """Upper-branch perturbation w(rho) on n*-1..N (1-based array, zero below)."""
    if abs(rho) >= w_cap(table):
        raise RhoOutOfRange(f"|rho|={abs(rho):.3e} outside the w contraction range")
    return _w_fixed_point(table, rho)


def _w_fixed_point(table: CoefficientTable, rho: float, itmax: int = 100) -> np.ndarray:
    ns, N = table.n_star, table.N
    pi = np.exp(table.log_pi[1:N + 1])
    tail_beyond = np.exp(table.log_tail[N])
    inv_lp = np.exp(-table.log_pi[ns - 1:N] - np.log(table.lam[ns - 1:N]))
    w = np.zeros(N + 1)
    for _ in range(itmax):
        opw = np.ones(N)
        opw += w[1:]
        g = pi * opw
        suf = np.concatenate([np.cumsum(g[::-1])[::-1], [0.0]])
        # R_j = sum_{p>j} pi_p (1+w_p); the mass beyond N rides with 1+w_N
        R = suf[ns - 1:N] + tail_beyond * opw[N - 1]
        w_new = np.zeros(N + 1)
        w_new[ns:] = rho * np.cumsum(inv_lp * R)
        if np.max(np.abs(w_new - w)) <= _W_FIXED_POINT_TOL * max(1e-300, float(np.max(np.abs(w_new)))):
            return w_new
        w = w_new
    raise ConvergenceFailure("w fixed point did not converge")


def matching_f(table: CoefficientTable, landmarks: Landmarks, rho: float) -> float:
    """Matching determinant in the cancellation-free rearrangement.

    f = (u0_{n*-1}-u0_{n*})(1+delta_{n*-1}) - u0_{n*} (delta_{n*}-delta_{n*-1})
        + u0_{n*-1}(1+delta_{n*-1}) w_{n*}
    with u0_{n*-1}-u0_{n*} = -exp(-log_pi[n*-1] - ln lam_{n*-1}); every addend
    is a product of representable factors, so no O(1)-O(1) subtraction occurs.
    """
    if abs(rho) >= delta_cap(table) or abs(rho) >= w_cap(table):
        raise RhoOutOfRange(f"|rho|={abs(rho):.3e} outside the admissible interval")
    return _matching_f_raw(table, rho)[0]


def _matching_f_raw(table: CoefficientTable, rho: float):
    ns = table.n_star
    u0 = table.u0
    delta, inc = _delta_pass(table, rho)
    w = _w_fixed_point(table, rho)
    du = -math.exp(-table.log_pi[ns - 1] - math.log(table.lam[ns - 1]))
    f = du * (1.0 + delta[ns - 1]) - u0[ns] * inc + u0[ns - 1] * (1.0 + delta[ns - 1]) * w[ns]
    return f, delta, w, inc


def matching_scales(table: CoefficientTable):
    """(D_K, eta_K): the matching slope estimate and the root bracket radius."""
    ns = table.n_star
    W0 = W0_kernel(table)
    _, inc0 = delta_kernel(table)
    D_K = table.u0[ns] * (W0[ns] + inc0)
    du = math.exp(-table.log_pi[ns - 1] - math.log(table.lam[ns - 1]))
    eta_K = (10.0 / 3.0) * du / D_K
    return float(D_K), float(eta_K)


def find_rho0(table: CoefficientTable, landmarks: Landmarks):
    """Smallest positive zero of the matching determinant, by bisection.

    Returns (rho0, MatchingState at the root).  The bracket starts at
    [0, min(eta_K, admissible caps)] and is expanded at most three times.
    """
    if table.n_star < 2:
        raise ValueError("matching needs n* >= 2; increase K")
    D_K, eta_K = matching_scales(table)
    cap = 0.9 * min(delta_cap(table), w_cap(table))
    hi = min(eta_K, cap)
    lo = 0.0
    f_lo = _matching_f_raw(table, lo)[0]
    f_hi = _matching_f_raw(table, hi)[0]
    expansions = 0
    while f_hi <= 0.0 and expansions < 3:
        hi = min(2.0 * hi, cap)
        f_hi = _matching_f_raw(table, hi)[0]
        expansions += 1
    if not (f_lo < 0.0 < f_hi):
        raise NoSignChange(
            f"no sign change on [0, {hi:.3e}] after x{2**expansions} expansion; "
            "model or truncation is misconfigured"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _matching_f_raw(table, mid)[0] < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= _BISECT_REL_WIDTH * hi:
            break
    rho0 = 0.5 * (lo + hi)
    f, delta, w, inc = _matching_f_raw(table, rho0)
    D0, _ = delta_kernel(table)
    state = MatchingState(
        rho=rho0,
        delta=delta,
        w=w,
        f_value=f,
        Delta0=D0,
        W0=W0_kernel(table),
        delta_increment=inc,
    )
    return rho0, state


def assemble_phi(state: MatchingState, table: CoefficientTable) -> SpectralSolution:
    """Glue the two branches at n*; phi_1 = 1 and phi > 0 on 1..N."""
    ns, N = table.n_star, table.N
    u0 = table.u0
    b = u0[ns] * (1.0 + state.delta[ns]) / (1.0 + state.w[ns])
    phi = np.full(N + 1, np.nan)
    phi[1:ns + 1] = u0[1:ns + 1] * (1.0 + state.delta[1:ns + 1])
    phi[ns:] = b * (1.0 + state.w[ns:])
    return SpectralSolution(rho0=state.rho, log_rho0=math.log(state.rho), phi=phi, b=float(b), state=state)


def residual_vector(phi: np.ndarray, rho: float, table: CoefficientTable) -> np.ndarray:
    """R_n = lam_n (phi_{n+1}-phi_n) - mu_n (phi_n - phi_{n-1} 1_{n>=2}) + rho phi_n
    for 1 <= n <= N-1, in difference form (1-based, slot 0 unused)."""
    N = table.N
    n = np.arange(1, N)
    up = table.lam[n] * (phi[n + 1] - phi[n])
    down = table.mu[n] * (phi[n] - np.where(n >= 2, phi[n - 1], 0.0))
    R = np.full(N, np.nan)
    R[1:] = up - down + rho * phi[n]
    return R


def residual(solution: SpectralSolution, table: CoefficientTable) -> float:
    """max_n |R_n| / (rho0 phi_n) over 1 <= n <= N-1."""
    R = residual_vector(solution.phi, solution.rho0, table)
    n = np.arange(1, table.N)
    return float(np.max(np.abs(R[1:]) / (solution.rho0 * solution.phi[n])))


# ---------------------------------------------------------------------------
# Sturm-bisection oracle on the symmetrized tridiagonal form
# ---------------------------------------------------------------------------


def sturm_count(d: np.ndarray, e: np.ndarray, x: float) -> int:
    """Number of eigenvalues of the symmetric tridiagonal (d, e) below x
    (zero pivots are perturbed to negative, counting x itself as crossed)."""
    tiny = np.finfo(float).tiny
    q = d[0] - x
    if q == 0.0:
        q = -tiny
    cnt = 1 if q < 0.0 else 0
    for i in range(1, len(d)):
        q = (d[i] - x) - e[i - 1] * e[i - 1] / q
        if q == 0.0:
            q = -tiny
        if q < 0.0:
            cnt += 1
    return cnt


def _gershgorin(d, e):
    rad = np.zeros(len(d))
    rad[:-1] += np.abs(e)
    rad[1:] += np.abs(e)
    return float(np.min(d - rad)), float(np.max(d + rad))


def _solve_tridiag_pivoted(e, diag, b):
    """Solve (tridiag with off-diagonal e, main diagonal diag) x = b with
    partial pivoting; the elimination may fill a second superdiagonal."""
    n = len(diag)
    a = diag.astype(float).copy()
    c1 = np.zeros(n)
    c1[: n - 1] = e
    low = np.zeros(n)
    low[1:] = e
    x = b.astype(float).copy()
    tiny = np.finfo(float).tiny
    c2 = np.zeros(n)
    for i in range(n - 1):
        if abs(low[i + 1]) > abs(a[i]):
            a[i], low[i + 1] = low[i + 1], a[i]
            c1[i], a[i + 1] = a[i + 1], c1[i]
            if i + 2 < n:
                c2[i], c1[i + 1] = c1[i + 1], 0.0
            x[i], x[i + 1] = x[i + 1], x[i]
        if a[i] == 0.0:
            a[i] = tiny
        m = low[i + 1] / a[i]
        a[i + 1] -= m * c1[i]
        if i + 2 < n:
            c1[i + 1] -= m * c2[i]
        x[i + 1] -= m * x[i]
    y = np.zeros(n)
    if a[n - 1] == 0.0:
        a[n - 1] = tiny
    y[n - 1] = x[n - 1] / a[n - 1]
    if n >= 2:
        y[n - 2] = (x[n - 2] - c1[n - 2] * y[n - 1]) / a[n - 2]
    for i in range(n - 3, -1, -1):
        y[i] = (x[i] - c1[i] * y[i + 1] - c2[i] * y[i + 2]) / a[i]
    return y


def top_eigs_from_rates(lam, mu, k, want_vector=True, max_iter=200):
    """Top-k eigenvalues of the killed-generator symmetrization for explicit rates.

    ``lam``/``mu`` are 0-based arrays for states 1..N (any truncation closure
    already applied by the caller).  Eigenvalues by Sturm-sequence bisection to
    1e-14 * ||T|| absolute; the leading eigenvector by inverse iteration.
    Returns (eigenvalues descending, psi or None).
    """
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    d = -(lam + mu)
    e = np.sqrt(lam[:-1] * mu[1:])
    n = len(d)
    lo0, hi0 = _gershgorin(d, e)
    normT = max(abs(lo0), abs(hi0))
    evals = []
    for j in range(1, k + 1):
        lo, hi = lo0, hi0
        target = n - j + 1  # smallest x with count_less(x) >= target is the j-th largest
        while hi - lo > 1e-14 * normT:
            mid = 0.5 * (lo + hi)
            if sturm_count(d, e, mid) >= target:
                hi = mid
            else:
                lo = mid
        evals.append(0.5 * (lo + hi))
    evals = np.asarray(evals)
    if not want_vector:
        return evals, None
    v = np.ones(n) / math.sqrt(n)
    psi = None
    for it in range(max_iter):
        y = _solve_tridiag_pivoted(e, d - evals[0], v)
        y /= np.linalg.norm(y)
        r = d * y - evals[0] * y
        r[:-1] += e * y[1:]
        r[1:] += e * y[:-1]
        psi = y
        # a couple of extra sweeps scrub start-vector junk out of the tiny
        # tail components before the residual test can stop the iteration
        if it >= 2 and np.linalg.norm(r) <= 1e-13 * normT:
            break
        v = y
    else:
        raise ConvergenceFailure("inverse iteration did not converge")
    return evals, psi


def tridiag_top_eigs(table: CoefficientTable, k: int):
    """Oracle for the table's chain: top-k eigenvalues of L and the leading
    eigenvector mapped back to phi (phi_1 = 1), using a reflecting closure at N."""
    if k > 4:
        raise ValueError("oracle supports k <= 4")
    if table.N > 10**5:
        raise ValueError("oracle path limited to N <= 1e5")
    N = table.N
    lam = table.lam[1:N + 1].copy()
    lam[-1] = 0.0  # reflect at N: the infinite chain's mass beyond N is negligible
    mu = table.mu[1:N + 1]
    evals, psi = top_eigs_from_rates(lam, mu, k)
    if psi[np.abs(psi).argmax()] < 0:
        psi = -psi
    log_phi = np.log(np.abs(psi)) - 0.5 * table.log_pi[1:N + 1]
    log_phi -= log_phi[0]
    phi = np.full(N + 1, np.nan)
    phi[1:] = np.exp(log_phi)
    return evals, phi


# ---------------------------------------------------------------------------
# Spectral gap lower bound and the closed-form asymptotic eigenvalue
# ---------------------------------------------------------------------------


def gap_lower_bound(solution: SpectralSolution, table: CoefficientTable) -> float:
    """Poincare lower bound g: 1/g = inf over the split index of the two
    weighted sums, evaluated for every split in O(N) with prefix/suffix sums."""
    N = table.N
    phi = solution.phi
    pi = np.exp(table.log_pi[1:N + 1])
    pq = pi * phi[1:] ** 2
    prefix = np.cumsum(pq)
    beyond = math.exp(table.log_tail[N]) * phi[N] ** 2
    suffix = np.concatenate([np.cumsum(pq[::-1])[::-1], [0.0]])[1:] + beyond
    inv = 1.0 / (pi[: N - 1] * table.lam[1:N] * phi[1:N] * phi[2:N + 1])
    with np.errstate(over="ignore"):
        # far-tail splits can overflow to inf; they are never the minimizer
        A = inv * prefix[: N - 1]
        B = inv * suffix[: N - 1]
    # the B-sum keeps running past the table; bound the remainder by the
    # mu-tail integral (geometric factor below 2 beyond n**)
    tail_B = 2.0 * table.inv_mu_tail
    sum_B_after = np.concatenate([np.cumsum(B[::-1])[::-1], [0.0]])[1:] + tail_B
    one_over_g = float(np.min(np.cumsum(A) + sum_B_after))
    return 1.0 / one_over_g


def asymptotic_rho0(landmarks: Landmarks, model: RateModel):
    """Closed-form large-K eigenvalue; returns (log_value, value) to survive underflow."""
    K = model.K
    lam1 = float(model.lam_tilde(1.0 / K))
    mu1 = float(model.mu_tilde(1.0 / K))
    pref = (
        (math.sqrt(lam1 / mu1) - math.sqrt(mu1 / lam1))
        * math.sqrt(K * landmarks.h_second)
        * landmarks.x_star
        * float(model.lam_tilde(landmarks.x_star))
        / math.sqrt(2.0 * math.pi)
    )
    log_value = math.log(pref) - K * landmarks.c
    value = math.exp(log_value) if log_value > -745.0 else 0.0
    return log_value, value


def analyze_spectrum(
    model: RateModel,
    landmarks: Landmarks,
    table: CoefficientTable,
    oracle: bool = False,
    oracle_k: int = 2,
) -> SpectralSolution:
    """Full spectral pipeline: matching root, eigenvector, residual, gap bound,
    asymptotic formula, and (optionally) the Sturm-bisection oracle."""
    rho0, state = find_rho0(table, landmarks)
    sol = assemble_phi(state, table)
    D_K, eta_K = matching_scales(table)
    sol.D_K, sol.eta_K = D_K, eta_K
    sol.residual = residual(sol, table)
    sol.gap_lb = gap_lower_bound(sol, table)
    sol.log_rho0_asymptotic, sol.rho0_asymptotic = asymptotic_rho0(landmarks, model)
    V = np.full(table.N + 1, np.nan)
    V[1:table.n_star + 1] = table.u0[1:table.n_star + 1]
    V[table.n_star:] = table.u0[table.n_star]
    sol.V = V
    if oracle:
        evals, _phi_or = tridiag_top_eigs(table, oracle_k)
        sol.oracle_rho0 = float(-evals[0])
        if oracle_k >= 2:
            sol.rho1 = float(-evals[1])
    return sol
