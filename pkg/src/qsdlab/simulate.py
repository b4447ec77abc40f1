"""Exact Gillespie simulation with reproducible per-replica streams.

The event loop lives in a compiled kernel when the extension built, with a
stream-identical pure-Python fallback selected at import time.  Replicas are
embarrassingly parallel; per-replica generators are seeded from
SeedSequence((master_seed, replica_index)) so results do not depend on the
worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InsufficientSurvivors
from .model import LOGISTIC, RateModel
from .qsd import tv_distance

try:
    from . import _ssa as _kernel

    SSA_BACKEND = "cython"
except ImportError:  # extension not built: pure-Python kernel
    from . import _ssa_fallback as _kernel

    SSA_BACKEND = "python"

from . import _ssa_fallback

_BOOTSTRAP_RESAMPLES = 200
_MIN_SURVIVORS_TV = 200
_MIN_SURVIVORS_FIT = 500


@dataclass(frozen=True)
class SimConfig:
    model: RateModel
    n0: object                      # positive int or "qsd"
    replicas: int
    t_max: float
    checkpoints: tuple
    master_seed: int

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        cp = np.asarray(self.checkpoints, dtype=float)
        if cp.size and (np.any(np.diff(cp) < 0) or cp[-1] > self.t_max):
            raise ValueError("checkpoints must be sorted and <= t_max")
        if self.n0 != "qsd" and (not isinstance(self.n0, (int, np.integer)) or self.n0 < 1):
            raise ValueError("n0 must be a positive integer or 'qsd'")


@dataclass
class SimEstimate:
    config: SimConfig
    extinction_times: np.ndarray    # capped at t_max
    censored: np.ndarray            # bool per replica
    checkpoints: np.ndarray
    states: np.ndarray              # (replicas, checkpoints) int64
    survival_frac: np.ndarray
    survival_se: np.ndarray
    rho0_hat: float
    rho0_ci: tuple
    fit_window: tuple               # (first, last) checkpoint indices used
    backend: str = SSA_BACKEND

    def survivors(self, ci: int) -> int:
        return int(np.count_nonzero(self.states[:, ci] > 0))

    def conditioned_hist(self, ci: int):
        """(states, counts) over surviving replicas at checkpoint index ci."""
        alive = self.states[:, ci]
        alive = alive[alive > 0]
        return np.unique(alive, return_counts=True)


def _family_code(model: RateModel):
    if model.family == LOGISTIC:
        lam, mu = model.params
        return 0, lam, mu, 0.0, 0.0
    a, b, cc, p = model.params
    return 1, a, b, cc, p


def _run_chunk(args):
    (model_doc, n0, t_max, checkpoints, master_seed, lo, hi, qsd_cdf, force_py) = args
    model = RateModel.from_json(model_doc)
    kern = _ssa_fallback if force_py else _kernel
    fam, p0, p1, p2, p3 = _family_code(model)
    C = len(checkpoints)
    cp = np.asarray(checkpoints, dtype=float)
    cdf = np.asarray(qsd_cdf, dtype=float) if qsd_cdf is not None else np.zeros(1)
    n0_code = 0 if n0 == "qsd" else int(n0)
    times = np.empty(hi - lo)
    cens = np.zeros(hi - lo, dtype=bool)
    states = np.zeros((hi - lo, C), dtype=np.int64)
    for i, rep in enumerate(range(lo, hi)):
        bg = np.random.PCG64(np.random.SeedSequence((master_seed, rep)))
        t_ext, censored = kern.run_replica(
            bg, fam, p0, p1, p2, p3, model.K, n0_code, cdf, t_max, cp, states[i]
        )
        times[i] = t_ext
        cens[i] = censored
    return times, cens, states


def run_ssa(
    config: SimConfig,
    qsd: np.ndarray | None = None,
    gap_lb: float | None = None,
    workers: int = 1,
    force_python_kernel: bool = False,
) -> SimEstimate:
    """Run all replicas and aggregate in replica order (worker-count invariant).

    ``qsd`` is the 1-based QSD vector, required when n0 == "qsd";
    ``gap_lb`` sets the survival-fit window start at 5/gap_lb.
    """
    if config.n0 == "qsd":
        if qsd is None:
            raise ValueError("n0='qsd' needs the QSD vector for initial-state sampling")
        cdf = np.cumsum(qsd[1:])
        cdf /= cdf[-1]
    else:
        cdf = None
    R = config.replicas
    cp = np.asarray(config.checkpoints, dtype=float)
    workers = max(1, int(workers))
    bounds = np.linspace(0, R, min(workers, R) + 1).astype(int)
    jobs = [
        (
            config.model.to_json(),
            config.n0,
            config.t_max,
            tuple(cp),
            config.master_seed,
            int(lo),
            int(hi),
            None if cdf is None else tuple(cdf),
            force_python_kernel,
        )
        for lo, hi in zip(bounds[:-1], bounds[1:])
        if hi > lo
    ]
    if len(jobs) == 1:
        parts = [_run_chunk(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    times = np.concatenate([p[0] for p in parts])
    cens = np.concatenate([p[1] for p in parts])
    states = np.vstack([p[2] for p in parts]) if cp.size else np.zeros((R, 0), dtype=np.int64)

    frac = (states > 0).sum(axis=0) / R if cp.size else np.zeros(0)
    se = np.sqrt(np.clip(frac * (1.0 - frac), 0.0, None) / R)
    rho0_hat, ci, window = _fit_survival(times, cens, cp, states, config.master_seed, gap_lb)
    return SimEstimate(
        config=config,
        extinction_times=times,
        censored=cens,
        checkpoints=cp,
        states=states,
        survival_frac=frac,
        survival_se=se,
        rho0_hat=rho0_hat,
        rho0_ci=ci,
        fit_window=window,
    )


def _window_indices(cp, states, gap_lb):
    survivors = (states > 0).sum(axis=0)
    t_lo = 5.0 / gap_lb if gap_lb else 0.0
    ok = np.nonzero((cp > t_lo) & (survivors >= _MIN_SURVIVORS_FIT))[0]
    if ok.size < 2:
        return None
    return int(ok[0]), int(ok[-1])


def _slope(cp, states, idx, window):
    i0, i1 = window
    sub = states[idx][:, i0:i1 + 1] > 0
    frac = sub.sum(axis=0) / len(idx)
    if np.any(frac <= 0.0):
        return math.nan
    coef = np.polyfit(cp[i0:i1 + 1], np.log(frac), 1)
    return -coef[0]


def _fit_survival(times, cens, cp, states, master_seed, gap_lb):
    """-log-survival slope over the configured window, bootstrap CI over replicas."""
    window = _window_indices(cp, states, gap_lb) if cp.size else None
    if window is None:
        return math.nan, (math.nan, math.nan), (-1, -1)
    R = states.shape[0]
    full = _slope(cp, states, np.arange(R), window)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((master_seed, 0xB00C))))
    boots = []
    for _ in range(_BOOTSTRAP_RESAMPLES):
        idx = rng.integers(0, R, size=R)
        s = _slope(cp, states, idx, window)
        if math.isfinite(s):
            boots.append(s)
    lo, hi = np.percentile(boots, [2.5, 97.5]) if boots else (math.nan, math.nan)
    return float(full), (float(lo), float(hi)), window


def conditioned_tv(estimate: SimEstimate, checkpoint: float, nu: np.ndarray):
    """TV between the surviving-replica histogram at ``checkpoint`` and nu,
    with a bootstrap confidence interval.  Returns (tv, lo, hi)."""
    cp = estimate.checkpoints
    match = np.nonzero(np.abs(cp - checkpoint) <= 1e-12 * max(1.0, checkpoint))[0]
    if match.size == 0:
        raise ValueError(f"checkpoint {checkpoint} not in the simulated grid")
    ci = int(match[0])
    alive = estimate.states[:, ci]
    alive = alive[alive > 0]
    if alive.size < _MIN_SURVIVORS_TV:
        raise InsufficientSurvivors(
            f"{alive.size} survivors at t={checkpoint}, need {_MIN_SURVIVORS_TV}"
        )
    width = max(int(alive.max()), len(nu) - 1)

    def tv_of(sample):
        hist = np.bincount(sample, minlength=width + 1)[1:]
        return tv_distance(hist / sample.size, nu[1:])

    tv = tv_of(alive)
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence((estimate.config.master_seed, 0x7B, ci)))
    )
    boots = [
        tv_of(rng.choice(alive, size=alive.size, replace=True))
        for _ in range(_BOOTSTRAP_RESAMPLES)
    ]
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return float(tv), float(lo), float(hi)


def ks_exponential(times: np.ndarray, rho0: float):
    """Kolmogorov-Smirnov test of extinction times against Exp(rho0)."""
    res = stats.kstest(times, "expon", args=(0.0, 1.0 / rho0))
    return float(res.statistic), float(res.pvalue)
