"""Rate models, landmark constants, assumption checks and coefficient tables.

All per-state arrays in this package are 1-based: index ``n`` holds the value
for population size ``n`` and slot 0 is unused (NaN).  Products and sums of
``pi``-like quantities are carried in log space throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IndexOutOfRange, NoCrossing, TruncationFailure
from .numutil import adaptive_simpson

LOGISTIC = "logistic"
POWER_DEATH = "power_death"

# Absolute ceiling for bracket-doubling scans; beyond this the model is
# treated as if births never lose to deaths.
_SCAN_CAP = 1e12
# Tolerance absorbed into floor(x*K) so that root-finder noise cannot shift
# the lattice landmarks off an intended integer.
_FLOOR_EPS = 1e-9

QUAD_TOL = 1e-12


@dataclass(frozen=True)
class RateModel:
    """Per-capita rate pair (lambda~, mu~) with carrying capacity K.

    Families:
      logistic:     lambda~(x) = lam,  mu~(x) = mu + x        (lam > mu > 0)
      power_death:  lambda~(x) = a,    mu~(x) = b + cc * x^p  (a > b > 0, p >= 1)
    """

    family: str
    params: tuple
    K: float

    @classmethod
    def logistic(cls, lam, mu, K, check=True):
        m = cls(LOGISTIC, (float(lam), float(mu)), float(K))
        if check:
            m._check()
        return m

    @classmethod
    def power_death(cls, a, b, cc, p, K, check=True):
        m = cls(POWER_DEATH, (float(a), float(b), float(cc), float(p)), float(K))
        if check:
            m._check()
        return m

    @classmethod
    def from_json(cls, doc, check=True):
        family = doc["family"]
        params = doc["params"]
        K = doc["K"]
        if family == LOGISTIC:
            return cls.logistic(params["lam"], params["mu"], K, check=check)
        if family == POWER_DEATH:
            return cls.power_death(params["a"], params["b"], params["cc"], params["p"], K, check=check)
        raise ValueError(f"unknown family {family!r}")

    def to_json(self):
        if self.family == LOGISTIC:
            lam, mu = self.params
            return {"family": LOGISTIC, "params": {"lam": lam, "mu": mu}, "K": self.K}
        a, b, cc, p = self.params
        return {"family": POWER_DEATH, "params": {"a": a, "b": b, "cc": cc, "p": p}, "K": self.K}

    def _check(self):
        if not self.K > 1.0:
            raise ValueError("K must exceed 1")
        if self.family == LOGISTIC:
            lam, mu = self.params
            if not (lam > 0 and mu > 0):
                raise ValueError("logistic rates must be positive")
            if not lam > mu:
                raise ValueError("logistic model requires lam > mu (births win at 0)")
        elif self.family == POWER_DEATH:
            a, b, cc, p = self.params
            if not (a > 0 and b > 0 and cc > 0):
                raise ValueError("power_death rates must be positive")
            if not a > b:
                raise ValueError("power_death model requires a > b (births win at 0)")
            if not p >= 1.0:
                raise ValueError("power_death exponent p must be >= 1")
        else:
            raise ValueError(f"unknown family {self.family!r}")

    # per-capita rate functions and analytic derivatives -------------------

    def lam_tilde(self, x):
        if self.family == LOGISTIC:
            return self.params[0] + 0.0 * np.asarray(x)
        return self.params[0] + 0.0 * np.asarray(x)

    def mu_tilde(self, x):
        if self.family == LOGISTIC:
            return self.params[1] + np.asarray(x)
        a, b, cc, p = self.params
        return b + cc * np.asarray(x) ** p

    def dlam_tilde(self, x):
        return 0.0 * np.asarray(x)

    def dmu_tilde(self, x):
        if self.family == LOGISTIC:
            return 1.0 + 0.0 * np.asarray(x)
        a, b, cc, p = self.params
        return cc * p * np.asarray(x) ** (p - 1.0)

    def d2mu_tilde(self, x):
        if self.family == LOGISTIC:
            return 0.0 * np.asarray(x)
        a, b, cc, p = self.params
        if p == 1.0:
            return 0.0 * np.asarray(x)
        return cc * p * (p - 1.0) * np.asarray(x) ** (p - 2.0)

    def lim_x_over_mu(self):
        """lim_{x->inf} x / mu~(x), the t=0 value of the tail-integral transform."""
        if self.family == LOGISTIC:
            return 1.0
        a, b, cc, p = self.params
        return 1.0 / cc if p == 1.0 else 0.0

    # lattice rates ---------------------------------------------------------

    def birth_rate(self, n):
        n = np.asarray(n, dtype=float)
        return n * self.lam_tilde(n / self.K)

    def death_rate(self, n):
        n = np.asarray(n, dtype=float)
        return n * self.mu_tilde(n / self.K)


@dataclass(frozen=True)
class Landmarks:
    """Structural constants derived from a rate model."""

    x_star: float
    x_2star: float
    theta: float
    x_3star: float
    n_star: int
    n_2star: int
    n_3star: int
    h_second: float
    sigma: float
    c: float
    a_rate: float


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    witness: str


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)

    def add(self, name, passed, witness):
        self.checks.append(AssumptionCheck(name, bool(passed), witness))

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)

    def failed_names(self):
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self):
        return {
            "all_passed": self.all_passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "witness": c.witness} for c in self.checks
            ],
        }


def _bisect(fn, lo, hi, iters=60):
    """Bisection for fn(lo) > 0 > fn(hi); returns the midpoint after ``iters`` halvings."""
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_equilibrium(model: RateModel) -> float:
    """Unique x* > 0 with lam~(x*) = mu~(x*), by doubling scan plus bisection."""

    def gap(x):
        return float(model.lam_tilde(x) - model.mu_tilde(x))

    hi = 1.0
    while gap(hi) > 0.0:
        hi *= 2.0
        if hi > _SCAN_CAP:
            raise NoCrossing("lam~/mu~ never falls below 1 on the scanned range")
    x = _bisect(gap, 0.0, hi)
    return x


def _ratio_root(model, level, lo, hi):
    """Root of mu~(x) = level * lam~(x) on [lo, hi]; fn positive at lo."""

    def fn(x):
        return float(level * model.lam_tilde(x) - model.mu_tilde(x))

    return _bisect(fn, lo, hi)


def tail_integral(model: RateModel, x_lo: float) -> float:
    """integral_{x_lo}^{inf} dx / (x mu~(x)), via the substitution t = 1/x."""
    g0 = model.lim_x_over_mu()

    def g(t):
        if t == 0.0:
            return g0
        x = 1.0 / t
        return float(1.0 / (t * model.mu_tilde(x)))

    return adaptive_simpson(g, 0.0, 1.0 / x_lo, tol=QUAD_TOL)


def log_rate_ratio(model: RateModel, x):
    """h(x) = log(mu~(x) / lam~(x)), the integrand of H."""
    return np.log(model.mu_tilde(x)) - np.log(model.lam_tilde(x))


def H_of(model: RateModel, x_star: float, x: float) -> float:
    """H(x) = integral_{x*}^{x} log(mu~/lam~), by adaptive Simpson."""
    return adaptive_simpson(lambda s: float(log_rate_ratio(model, s)), x_star, x, tol=QUAD_TOL)


def compute_landmarks(model: RateModel) -> Landmarks:
    """All landmark constants; the descent rate uses a coefficient table for this K."""
    geo = _landmark_geometry(model)
    table = build_table(model, geo)
    a_rate = _a_rate(table)
    return Landmarks(a_rate=a_rate, **geo.__dict__)


@dataclass(frozen=True)
class _Geometry:
    x_star: float
    x_2star: float
    theta: float
    x_3star: float
    n_star: int
    n_2star: int
    n_3star: int
    h_second: float
    sigma: float
    c: float


def _landmark_geometry(model: RateModel) -> _Geometry:
    x_star = find_equilibrium(model)
    # x**: first x with lam~/mu~ < 1/2, i.e. mu~ = 2 lam~.
    hi = max(1.0, 2.0 * x_star)
    while float(2.0 * model.lam_tilde(hi) - model.mu_tilde(hi)) > 0.0:
        hi *= 2.0
        if hi > _SCAN_CAP:
            raise NoCrossing("mu~ never reaches twice lam~ on the scanned range")
    x_2star = _ratio_root(model, 2.0, x_star, hi)
    ratio0 = float(model.mu_tilde(0.0) / model.lam_tilde(0.0))
    theta = 0.5 * (ratio0 + 1.0)
    # x***: last x with mu~/lam~ <= theta, i.e. mu~ = theta lam~ on [0, x*].
    x_3star = _ratio_root(model, theta, 0.0, x_star)
    K = model.K
    n_star = int(math.floor(x_star * K + _FLOOR_EPS))
    n_2star = int(math.floor(x_2star * K + _FLOOR_EPS))
    n_3star = int(math.floor(x_3star * K + _FLOOR_EPS))
    ls, ms = float(model.lam_tilde(x_star)), float(model.mu_tilde(x_star))
    h_second = float(model.dmu_tilde(x_star)) / ms - float(model.dlam_tilde(x_star)) / ls
    sigma = 1.0 / math.sqrt(h_second)
    c = adaptive_simpson(
        lambda x: float(np.log(model.lam_tilde(x)) - np.log(model.mu_tilde(x))),
        0.0,
        x_star,
        tol=QUAD_TOL,
    )
    return _Geometry(x_star, x_2star, theta, x_3star, n_star, n_2star, n_3star, h_second, sigma, c)


@dataclass
class CoefficientTable:
    """Truncated log-space tables of pi_n, u0_n, tail sums and rate arrays.

    ``log_pi[n]`` = ln pi_n for 1 <= n <= N; ``log_tail[n]`` = ln sum_{p>n} pi_p
    (0 <= n <= N) including a geometric correction for the mass beyond N;
    ``lam[n]``/``mu[n]`` cover 1 <= n <= N+1; ``log_ratio_prefix[n]`` =
    sum_{l<n} ln(mu_l/lam_l) so that ln Lambda_{n,m} is an O(1) difference.
    """

    K: float
    N: int
    n_star: int
    n_2star: int
    log_pi: np.ndarray
    u0: np.ndarray
    log_tail: np.ndarray
    log_pi_sum: float
    lam: np.ndarray
    mu: np.ndarray
    log_ratio_prefix: np.ndarray
    # estimate of sum_{p>N} 1/mu_p, used to continue suprema past the table
    inv_mu_tail: float = 0.0

    @classmethod
    def from_rates(cls, lam, mu, K=0.0, n_star=0, n_2star=0):
        """Build a table from explicit 1-based rate lists (toy chains in tests).

        ``lam`` and ``mu`` list the rates for states 1..N; the tail beyond N is
        taken as zero, which is exact when lam[N] == 0.
        """
        N = len(lam)
        lam_a = np.concatenate([[np.nan], np.asarray(lam, dtype=float), [0.0]])
        mu_a = np.concatenate([[np.nan], np.asarray(mu, dtype=float), [np.inf]])
        return cls._assemble(K, N, n_star, n_2star, lam_a, mu_a)

    @classmethod
    def _assemble(cls, K, N, n_star, n_2star, lam, mu, inv_mu_tail=0.0):
        log_pi = np.full(N + 1, np.nan)
        log_pi[1] = -math.log(mu[1])
        with np.errstate(divide="ignore"):
            log_lam = np.log(lam[1:N + 1])
            log_mu = np.log(mu[1:N + 2])
        if N >= 2:
            log_pi[2:] = log_pi[1] + np.cumsum(log_lam[:N - 1] - log_mu[1:N])
        # geometric tail bound beyond N: ratio r = lam_N / mu_{N+1} (< 1 past n**)
        r = lam[N] / mu[N + 1]
        tail_seed = log_pi[N] + math.log(r / (1.0 - r)) if 0.0 < r < 1.0 else -np.inf
        acc = np.logaddexp.accumulate(np.concatenate([[tail_seed], log_pi[N:0:-1]]))
        log_tail = acc[::-1].copy()
        u0 = np.full(N + 1, np.nan)
        u0[1] = 1.0
        if N >= 2:
            u0[2:] = 1.0 + np.cumsum(np.exp(-log_pi[1:N] - log_lam[:N - 1]))
        prefix = np.full(N + 2, np.nan)
        prefix[1] = 0.0
        prefix[2:] = np.cumsum(log_mu[:N] - log_lam[:N])
        return cls(
            K=K,
            N=N,
            n_star=n_star,
            n_2star=n_2star,
            log_pi=log_pi,
            u0=u0,
            log_tail=log_tail,
            log_pi_sum=float(log_tail[0]),
            lam=lam,
            mu=mu,
            log_ratio_prefix=prefix,
            inv_mu_tail=inv_mu_tail,
        )

    def log_Lambda(self, n: int, m: int) -> float:
        """ln Lambda_{n,m} = ln prod_{j=m}^{n-1} mu_j/lam_j, O(1) after the build."""
        if not (1 <= m <= n <= self.N + 1):
            raise IndexOutOfRange(f"need 1 <= m <= n <= N+1, got n={n}, m={m}, N={self.N}")
        return float(self.log_ratio_prefix[n] - self.log_ratio_prefix[m])


def build_table(model: RateModel, landmarks, hard_cap: int = 10**7) -> CoefficientTable:
    """Coefficient table truncated at n** + max(40, ceil(10 sqrt(K))), extended
    until pi_N falls 30 decades below the peak."""
    K = model.K
    N = landmarks.n_2star + max(40, int(math.ceil(10.0 * math.sqrt(K))))
    while True:
        if N > hard_cap:
            raise TruncationFailure(f"table truncation level {N} exceeds hard cap {hard_cap}")
        ns = np.arange(1, N + 2, dtype=float)
        lam = np.concatenate([[np.nan], ns * model.lam_tilde(ns / K)])
        mu = np.concatenate([[np.nan], ns * model.mu_tilde(ns / K)])
        # quick log-pi scan to test the truncation rule before assembling everything
        log_pi_1 = -math.log(mu[1])
        log_ratio = np.log(lam[1:N + 1]) - np.log(mu[2:N + 2])
        log_pi_all = np.concatenate([[log_pi_1], log_pi_1 + np.cumsum(log_ratio[:-1])])
        peak = float(np.max(log_pi_all))
        if log_pi_all[-1] - peak < -30.0 * math.log(10.0):
            break
        N = int(N * 1.25) + 16
    inv_mu_tail = tail_integral(model, N / K)
    return CoefficientTable._assemble(
        K, N, landmarks.n_star, landmarks.n_2star, lam, mu, inv_mu_tail=inv_mu_tail
    )


def _a_rate(table: CoefficientTable) -> float:
    """Per-K descent rate (sum_{j>=n**} tail_j / (lam_j pi_j))^{-1} from table sums."""
    j = np.arange(table.n_2star, table.N)
    terms = np.exp(table.log_tail[j] - table.log_pi[j] - np.log(table.lam[j]))
    return float(1.0 / terms.sum())


def validate_assumptions(model: RateModel, grid_points: int = 1000) -> ValidationReport:
    """Numerical pass/fail check of every standing assumption, with witnesses.

    Failures are report entries, never exceptions; the model may be built with
    ``check=False`` to route constructor-level violations through the report.
    """
    if grid_points < 100:
        raise ValueError("grid_points must be at least 100")
    rep = ValidationReport()

    lam0 = float(model.lam_tilde(0.0))
    mu0 = float(model.mu_tilde(0.0))
    coeff_ok = lam0 > mu0 > 0.0
    rep.add("coeff", coeff_ok, f"lam~(0)={lam0:.6g}, mu~(0)={mu0:.6g}")
    if not coeff_ok:
        # Remaining checks presuppose births winning at 0; report and stop.
        return rep

    try:
        x_star = find_equilibrium(model)
        geo = _landmark_geometry(model)
    except NoCrossing as exc:
        rep.add("infini", False, str(exc))
        rep.add("eq:xstar", False, "no crossing found")
        return rep
    x_max = 10.0 * geo.x_2star
    grid = np.geomspace(min(1e-3, x_star / 100.0), x_max, grid_points)

    ratio = np.asarray(model.lam_tilde(grid) / model.mu_tilde(grid), dtype=float)
    decreasing = bool(np.all(np.diff(ratio) <= 1e-12 * ratio[:-1]))
    far = float(model.lam_tilde(100.0 * x_max) / model.mu_tilde(100.0 * x_max))
    rep.add(
        "infini",
        decreasing and far < 1e-2,
        f"ratio decreasing on grid={decreasing}, ratio({100.0 * x_max:.3g})={far:.3g}",
    )

    gap = np.asarray(model.lam_tilde(grid) - model.mu_tilde(grid), dtype=float)
    crossings = int(np.count_nonzero(np.diff(np.sign(gap)) != 0))
    rep.add("eq:xstar", crossings == 1, f"sign changes on grid={crossings}, x*={x_star:.12g}")

    dgap = abs(float(model.dlam_tilde(x_star)) - float(model.dmu_tilde(x_star)))
    rep.add("eq:generic", dgap > 1e-8, f"|lam~'-mu~'|(x*)={dgap:.6g}")

    # cv-int: doubling-window tail integrals must be Cauchy.
    incs = []
    x_lo = x_star / 2.0
    for k in range(24):
        a, b = x_lo * 2.0**k, x_lo * 2.0 ** (k + 1)
        incs.append(
            adaptive_simpson(lambda x: 1.0 / (x * float(model.mu_tilde(x))), a, b, tol=1e-13)
        )
    incs = np.asarray(incs)
    cv_ok = bool(np.all(np.diff(incs) < 1e-15 + 0.9 * incs[:-1]) and incs[-1] < 1e-6)
    rep.add("cv-int", cv_ok, f"last doubling increment={incs[-1]:.3g}, I~{incs.sum():.6g}")

    sup_pierre = float(np.max(model.dmu_tilde(grid) / model.mu_tilde(grid)))
    rep.add("pierre", math.isfinite(sup_pierre), f"sup mu~'/mu~ on grid={sup_pierre:.6g}")

    h = np.asarray(log_rate_ratio(model, grid), dtype=float)
    mono = bool(np.all(np.diff(h) >= -1e-12))
    rep.add("monotone-h", mono, "log(mu~/lam~) non-decreasing on grid")

    # (1+x^2)|H'''| with analytic derivatives of each family.
    lt, mt = np.asarray(model.lam_tilde(grid), float), np.asarray(model.mu_tilde(grid), float)
    dlt, dmt = np.asarray(model.dlam_tilde(grid), float), np.asarray(model.dmu_tilde(grid), float)
    d2mt = np.asarray(model.d2mu_tilde(grid), float)
    h3 = (d2mt * mt - dmt**2) / mt**2 - (0.0 * lt - dlt**2) / lt**2
    sup_h3 = float(np.max((1.0 + grid**2) * np.abs(h3)))
    rep.add("seconde", math.isfinite(sup_h3) and sup_h3 < 1e9, f"sup (1+x^2)|H'''|={sup_h3:.6g}")

    table = build_table(model, geo)
    crit = table.log_pi[1:] + 2.0 * np.log(table.mu[1:table.N + 1])
    below = np.nonzero(crit < math.log(1e-12))[0]
    tail_dec = bool(np.all(np.diff(crit[table.n_2star:]) < 0.0))
    rep.add(
        "eq:pimu",
        below.size > 0 and tail_dec,
        f"pi_n mu_n^2 < 1e-12 first at n={below[0] + 1 if below.size else -1}, N={table.N}",
    )
    return rep
