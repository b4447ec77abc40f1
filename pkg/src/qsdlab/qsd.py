"""Quasi-stationary distribution, Gaussian comparator, extinction times by
three routes, mixture weights, and a uniformization transient solver."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import LengthMismatch, TimeTooLarge
from .model import CoefficientTable, Landmarks
from .numutil import log_poisson_pmf
from .spectral import SpectralSolution

_POISSON_MASS = 1.0 - 1e-14
_DEFAULT_STEP_CAP = 2_000_000


@dataclass
class QsdResult:
    nu: np.ndarray            # 1-based QSD over 1..N
    mean: float
    variance: float
    gaussian: np.ndarray      # 1-based comparator over 1..N
    Z_K: float                # finite-sum normalizer
    Z_K_formula: float        # sqrt(2 pi K) sigma
    tv_gauss: float
    t0_spectral: float
    t0_summed: float
    t0_linear: float
    alpha: np.ndarray         # 1-based mixture weights


def qsd_from_phi(solution: SpectralSolution, table: CoefficientTable):
    """nu_n = pi_n phi_n / <phi, 1>_pi, normalized in log space; returns
    (nu 1-based, mean, variance)."""
    N = table.N
    log_num = table.log_pi[1:N + 1] + np.log(solution.phi[1:N + 1])
    log_num -= logsumexp(log_num)
    nu = np.full(N + 1, np.nan)
    nu[1:] = np.exp(log_num)
    n = np.arange(1, N + 1, dtype=float)
    mean = float(nu[1:] @ n)
    variance = float(nu[1:] @ n**2 - mean**2)
    return nu, mean, variance


def gaussian_comparator(landmarks: Landmarks, K: float, N: int):
    """Discrete Gaussian centered at n* with variance K sigma^2 on 1..N.

    Returns (gaussian 1-based, Z_finite, sqrt(2 pi K) sigma)."""
    n = np.arange(1, N + 1, dtype=float)
    z = np.exp(-((n - landmarks.n_star) ** 2) / (2.0 * K * landmarks.sigma**2))
    Z = float(z.sum())
    g = np.full(N + 1, np.nan)
    g[1:] = z / Z
    return g, Z, math.sqrt(2.0 * math.pi * K) * landmarks.sigma


def tv_distance(p, q, pad=True) -> float:
    """Total variation distance (1/2) sum |p - q|, zero-padding the shorter vector."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if len(p) != len(q):
        if not pad:
            raise LengthMismatch(f"lengths {len(p)} != {len(q)} with padding disabled")
        m = max(len(p), len(q))
        p = np.pad(p, (0, m - len(p)))
        q = np.pad(q, (0, m - len(q)))
    return float(0.5 * np.abs(p - q).sum())


def hitting_times_summed(table: CoefficientTable) -> np.ndarray:
    """E_n[T_0] = sum_{m<=n} (1/(mu_m pi_m)) sum_{i>=m} pi_i, by prefix sums (1-based).

    This is the canonical absorption-time formula for a birth-death chain; the
    independent linear-solve route below must agree with it.
    """
    N = table.N
    m = np.arange(1, N + 1)
    log_tail_incl = np.logaddexp(table.log_pi[m], table.log_tail[m])
    terms = np.exp(-table.log_pi[m] - np.log(table.mu[m]) + log_tail_incl)
    E = np.full(N + 1, np.nan)
    E[1:] = np.cumsum(terms)
    return E


def extinction_time_summed(nu: np.ndarray, table: CoefficientTable) -> float:
    """E_nu[T_0] via the explicit per-state sums."""
    E = hitting_times_summed(table)
    return float(nu[1:] @ E[1:])


def extinction_time_linear(table: CoefficientTable) -> np.ndarray:
    """Mean absorption times t_n solving the generator equation with unit source,
    lam_n (t_{n+1}-t_n) - mu_n (t_n - t_{n-1}) = -1,  t_0 = 0,  t_{N+1} = t_N,
    by backward substitution in the difference variables (1-based array)."""
    N = table.N
    d = np.zeros(N + 2)
    for n in range(N, 0, -1):
        d[n] = (1.0 + table.lam[n] * d[n + 1]) / table.mu[n]
    t = np.full(N + 1, np.nan)
    t[1:] = np.cumsum(d[1:N + 1])
    return t


def alpha_weights(table: CoefficientTable, landmarks: Landmarks) -> np.ndarray:
    """Mixture weights: u0_n / u0_{n*} below n*, one above (1-based)."""
    N, ns = table.N, landmarks.n_star
    a = np.ones(N + 1)
    a[0] = np.nan
    a[1:ns + 1] = table.u0[1:ns + 1] / table.u0[ns]
    return a


def analyze_qsd(
    solution: SpectralSolution, table: CoefficientTable, landmarks: Landmarks
) -> QsdResult:
    """Assemble every QSD-side quantity from a spectral solution."""
    nu, mean, variance = qsd_from_phi(solution, table)
    g, Z, Zf = gaussian_comparator(landmarks, table.K, table.N)
    tvg = tv_distance(nu[1:], g[1:])
    t_lin = extinction_time_linear(table)
    return QsdResult(
        nu=nu,
        mean=mean,
        variance=variance,
        gaussian=g,
        Z_K=Z,
        Z_K_formula=Zf,
        tv_gauss=tvg,
        t0_spectral=1.0 / solution.rho0,
        t0_summed=extinction_time_summed(nu, table),
        t0_linear=float(nu[1:] @ t_lin[1:]),
        alpha=alpha_weights(table, landmarks),
    )


# ---------------------------------------------------------------------------
# Transient analysis by uniformization
# ---------------------------------------------------------------------------


class _Uniformizer:
    """Poisson-mixture evolution of a law over states 0..N (0 absorbing,
    reflecting closure at N so probability is conserved exactly)."""

    def __init__(self, table: CoefficientTable, step_cap=_DEFAULT_STEP_CAP):
        N = table.N
        lam = table.lam[1:N + 1].copy()
        lam[-1] = 0.0
        mu = table.mu[1:N + 1]
        self.rate = float(np.max(lam + mu)) + 1.0
        self.up = lam / self.rate
        self.dn = mu / self.rate
        self.stay = 1.0 - self.up - self.dn
        self.N = N
        self.step_cap = step_cap

    def kernel_step(self, v):
        """One application of the uniformized jump kernel to a law over 0..N."""
        out = np.empty_like(v)
        out[0] = v[0] + v[1] * self.dn[0]
        out[1:] = v[1:] * self.stay
        out[2:] += v[1:-1] * self.up[:-1]
        out[1:-1] += v[2:] * self.dn[1:]
        return out

    def evolve(self, v, t):
        if t < 0.0:
            raise ValueError("t must be nonnegative")
        if t == 0.0:
            return v.copy()
        a = self.rate * t
        k_hi = int(a + 10.0 * math.sqrt(a) + 30.0)
        if k_hi > self.step_cap:
            raise TimeTooLarge(
                f"uniformization needs ~{k_hi} steps for t={t:g}, cap {self.step_cap}"
            )
        out = np.zeros_like(v)
        vk = v.copy()
        cum = 0.0
        for k in range(k_hi + 1):
            wk = math.exp(log_poisson_pmf(k, a))
            if wk > 0.0:
                out += wk * vk
                cum += wk
            if cum >= _POISSON_MASS:
                break
            vk = self.kernel_step(vk)
        return out / cum


def transient_law(table: CoefficientTable, n0: int, t: float, step_cap=_DEFAULT_STEP_CAP):
    """Full law of the chain at time t started from state n0, over states 0..N
    (plain 0-based vector: entry i is the probability of state i)."""
    u = _Uniformizer(table, step_cap)
    v = np.zeros(table.N + 1)
    v[n0] = 1.0
    return u.evolve(v, t)


def transient_law_at_times(table: CoefficientTable, v0, times, step_cap=_DEFAULT_STEP_CAP):
    """Laws at a sorted grid of times, evolved segment by segment."""
    u = _Uniformizer(table, step_cap)
    v = np.asarray(v0, dtype=float).copy()
    prev = 0.0
    out = []
    for t in times:
        if t < prev:
            raise ValueError("times must be sorted")
        v = u.evolve(v, t - prev)
        prev = t
        out.append(v.copy())
    return out


def transient_conditioned_law(table: CoefficientTable, n0: int, t: float, step_cap=_DEFAULT_STEP_CAP):
    """Survival-conditioned law at time t from state n0.

    Returns (law, survival): ``law`` is 1-based over 1..N with slot 0 zero,
    ``survival`` is P(T_0 > t)."""
    v = transient_law(table, n0, t, step_cap)
    survival = float(1.0 - v[0])
    law = np.zeros(table.N + 1)
    law[1:] = v[1:] / survival
    return law, survival
