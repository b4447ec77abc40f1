import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import toy_solution, two_state_toy
from qsdlab import spectral as spec_mod
from qsdlab.errors import NonPositiveCoefficient, RhoOutOfRange
from qsdlab.model import CoefficientTable
from qsdlab.spectral import (
    SpectralSolution,
    assemble_phi,
    asymptotic_rho0,
    delta_of_rho,
    find_rho0,
    gap_lower_bound,
    matching_f,
    residual,
    residual_vector,
    solve_recursion,
    sturm_count,
    top_eigs_from_rates,
    tridiag_top_eigs,
    w_of_rho,
)


# -- solve_recursion ----------------------------------------------------------


def three_term_residual(alpha, beta, h, w, q, n_max):
    out = []
    for n in range(q + 1, n_max):
        out.append(alpha[n] * w[n + 1] + beta[n] * w[n - 1] - (alpha[n] + beta[n]) * w[n] - h[n])
    return np.asarray(out)


def test_solve_recursion_constants():
    n_max = 9
    alpha = np.full(n_max + 1, 1.3)
    beta = np.full(n_max + 1, 0.7)
    h = np.zeros(n_max + 1)
    w = solve_recursion(alpha, beta, h, 1.0, 1.0, 1, n_max)
    assert np.allclose(w[1:], 1.0, atol=1e-14)


def test_solve_recursion_reproduces_u0(b30):
    tab = b30.table
    n_max = tab.n_star
    alpha = np.concatenate([[np.nan], tab.lam[1:]])
    beta = np.concatenate([[np.nan], tab.mu[1:]])
    h = np.zeros(len(alpha))
    w = solve_recursion(alpha[:n_max + 1], beta[:n_max + 1], h[:n_max + 1], 1.0, tab.u0[2], 1, n_max)
    assert np.max(np.abs(w[1:n_max + 1] - tab.u0[1:n_max + 1])) <= 1e-10 * np.max(tab.u0[1:n_max + 1])


def test_solve_recursion_rejects_nonpositive():
    alpha = np.array([np.nan, 1.0, -1.0, 1.0, 1.0])
    beta = np.ones(5)
    with pytest.raises(NonPositiveCoefficient):
        solve_recursion(alpha, beta, np.zeros(5), 0.0, 1.0, 1, 4)


@settings(max_examples=25, deadline=None)
@given(data=st.data())
def test_solve_recursion_random_instances(data):
    n_max = 8
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    alpha = np.concatenate([[np.nan], rng.uniform(0.2, 3.0, n_max)])
    beta = np.concatenate([[np.nan], rng.uniform(0.2, 3.0, n_max)])
    h = np.concatenate([[np.nan], rng.uniform(-1.0, 1.0, n_max)])
    w = solve_recursion(alpha, beta, h, rng.uniform(-1, 1), rng.uniform(-1, 1), 1, n_max)
    res = three_term_residual(alpha, beta, h, w, 1, n_max)
    assert np.max(np.abs(res)) <= 1e-12 * max(1.0, np.max(np.abs(w[1:])))


# -- delta and w branches -----------------------------------------------------


def test_delta_zero_at_rho_zero(b30):
    d = delta_of_rho(b30.table, b30.landmarks, 0.0)
    assert np.all(d == 0.0)


def test_delta_norm_bound(b30):
    tab, lm = b30.table, b30.landmarks
    D0, _ = spec_mod.delta_kernel(tab)
    cap = 1.0 / (3.0 * D0[tab.n_star])
    rho = 0.5 * cap
    d = delta_of_rho(tab, lm, rho)
    bound = rho * D0[tab.n_star] / (1.0 - rho * D0[tab.n_star])
    assert np.max(np.abs(d)) <= bound
    assert np.all(1.0 + d[1:] > 0.0)


def test_delta_out_of_range(b30):
    tab, lm = b30.table, b30.landmarks
    D0, _ = spec_mod.delta_kernel(tab)
    with pytest.raises(RhoOutOfRange):
        delta_of_rho(tab, lm, 1.0 / (2.0 * D0[tab.n_star]))
    with pytest.raises(RhoOutOfRange):
        w_of_rho(tab, lm, 1.0)


def test_w_zero_at_rho_zero(b30):
    w = w_of_rho(b30.table, b30.landmarks, 0.0)
    assert np.all(w == 0.0)


def test_w_norm_bound(b30):
    tab, lm = b30.table, b30.landmarks
    Wsup = spec_mod.w_sup_bound(tab)
    rho = 0.3 / (3.0 * Wsup)
    w = w_of_rho(tab, lm, rho)
    bound = rho * Wsup / (1.0 - rho * Wsup)
    assert np.max(np.abs(w)) <= bound
    assert np.all(1.0 + w[tab.n_star - 1:] > 0.0)


def test_derivative_kernels_by_central_differences(b30):
    # (x(h)-x(-h))/2h at 0: -Delta0 for delta (the series is -rho * kernel)
    # and +W0 for w, componentwise to 1e-6 relative.
    tab, lm = b30.table, b30.landmarks
    _, eta = spec_mod.matching_scales(tab)
    h = 1e-3 * eta
    dp = delta_of_rho(tab, lm, h)
    dm = delta_of_rho(tab, lm, -h)
    fd_delta = (dp - dm) / (2.0 * h)
    D0, _ = spec_mod.delta_kernel(tab)
    sel = D0 > 1e-300
    assert np.max(np.abs(fd_delta[sel] / (-D0[sel]) - 1.0)) <= 1e-6
    wp = w_of_rho(tab, lm, h)
    wm = w_of_rho(tab, lm, -h)
    fd_w = (wp - wm) / (2.0 * h)
    W0 = spec_mod.W0_kernel(tab)
    sel = W0 > 1e-300
    assert np.max(np.abs(fd_w[sel] / W0[sel] - 1.0)) <= 1e-6


# -- matching -----------------------------------------------------------------


def test_f_at_zero_is_minus_u0_increment(b30):
    tab, lm = b30.table, b30.landmarks
    ns = tab.n_star
    f0 = matching_f(tab, lm, 0.0)
    expect = -math.exp(-tab.log_pi[ns - 1] - math.log(tab.lam[ns - 1]))
    assert f0 == pytest.approx(expect, rel=1e-14)
    assert f0 < 0


def test_f_positive_at_eta(b30):
    tab, lm = b30.table, b30.landmarks
    _, eta = spec_mod.matching_scales(tab)
    assert matching_f(tab, lm, eta) > 0.0


def test_root_postcondition(b30):
    tab, lm = b30.table, b30.landmarks
    rho0, state = find_rho0(tab, lm)
    f0 = matching_f(tab, lm, 0.0)
    assert abs(state.f_value) <= 1e-14 * abs(f0)
    _, eta = spec_mod.matching_scales(tab)
    assert 0.0 < rho0 <= eta


def test_rho0_against_oracle(b30):
    assert abs(b30.sol.rho0 / b30.sol.oracle_rho0 - 1.0) <= 1e-6


def test_rho0_invariant_under_table_doubling(b30):
    from qsdlab.model import build_table

    lm = b30.landmarks
    tab2 = build_table(b30.model, lm)
    # rebuild with twice the default truncation
    class _g:
        n_star = lm.n_star
        n_2star = lm.n_2star * 2 + 40
    tab2 = build_table(b30.model, _g)
    tab2.n_star = lm.n_star
    rho2, _ = find_rho0(tab2, lm)
    assert abs(rho2 / b30.sol.rho0 - 1.0) <= 1e-10


def test_rho0_ratio_to_asymptotic_tends_to_one(sweep_bundles):
    ratios = [
        math.exp(b.sol.log_rho0 - b.sol.log_rho0_asymptotic) for b in sweep_bundles.values()
    ]
    errs = [abs(r - 1.0) for r in ratios]
    assert errs == sorted(errs, reverse=True)
    assert errs[-1] < 0.01


def test_phi_assembly(b30):
    tab = b30.table
    sol = b30.sol
    ns = tab.n_star
    assert sol.phi[1] == pytest.approx(1.0, abs=1e-15)
    assert np.all(sol.phi[1:] > 0)
    # branch agreement at n*-1: u0(1+delta) vs b (w_{n*-1}=0)
    lower = tab.u0[ns - 1] * (1.0 + sol.state.delta[ns - 1])
    assert abs(lower - sol.b) <= 1e-12 * sol.b
    # phi non-decreasing up to n*
    assert np.all(np.diff(sol.phi[1:ns + 1]) >= -1e-12 * sol.phi[1])


def test_phi_minus_V_bound(sweep_bundles):
    for K, b in sweep_bundles.items():
        sup = np.nanmax(np.abs(b.sol.phi[1:] - b.sol.V[1:]))
        assert sup <= 100.0 * b.sol.rho0 * K * math.log(K)


def test_branch_residual_relative_to_scale(b30):
    # the assembled two-branch eigenvector satisfies the three-term relation at
    # interior points of each branch, relative to the local equation scale
    tab, sol = b30.table, b30.sol
    R = residual_vector(sol.phi, sol.rho0, tab)
    n = np.arange(1, tab.N)
    scale = tab.lam[n] * sol.phi[n + 1] + tab.mu[n] * sol.phi[n]
    rel = np.abs(R[1:]) / scale
    assert np.max(rel) <= 1e-10


# -- residual op --------------------------------------------------------------


def test_residual_toy_exact_eigenpair():
    lam = [1.0, 1.0, 1.0, 1.0, 0.0]
    mu = [1.0, 1.0, 1.0, 1.0, 1.0]
    tab = CoefficientTable.from_rates(lam, mu)
    sol = toy_solution(tab)
    assert residual(sol, tab) <= 1e-10


def test_residual_matched_solution(b30):
    assert residual(b30.sol, b30.table) <= 1e-6


def test_residual_flat_vector_fails_at_boundary(b30):
    tab = b30.table
    phi = np.ones(tab.N + 1)
    R = residual_vector(phi, 0.0, tab)
    # the absorbing boundary term: R_1 = -mu_1 exactly, zero elsewhere
    assert R[1] == pytest.approx(-tab.mu[1], rel=1e-15)
    assert np.max(np.abs(R[2:])) <= 1e-12 * tab.mu[1]


# -- tridiagonal oracle -------------------------------------------------------


def test_oracle_two_state_toy():
    tab = two_state_toy()
    evals, phi = tridiag_top_eigs(tab, 2)
    assert -evals[0] == pytest.approx(2.0 - math.sqrt(2.0), abs=1e-12)
    assert -evals[1] == pytest.approx(2.0 + math.sqrt(2.0), abs=1e-12)
    assert phi[1] == pytest.approx(1.0)


def test_sturm_count_matches_dense():
    rng = np.random.default_rng(7)
    d = rng.normal(size=14)
    e = rng.normal(size=13)
    ev = np.linalg.eigvalsh(np.diag(d) + np.diag(e, 1) + np.diag(e, -1))
    for s in (-3.0, -0.5, 0.0, 0.4, 2.5):
        assert sturm_count(d, e, s) == int(np.sum(ev < s))


def test_oracle_eigenvector_matches_matching(b30, phi_oracle_30):
    _, phi_or = phi_oracle_30
    rel = np.abs(phi_or[1:] / b30.sol.phi[1:] - 1.0)
    assert np.max(rel) <= 1e-6


def test_oracle_guards(b30):
    with pytest.raises(ValueError):
        tridiag_top_eigs(b30.table, 5)


# -- gap ----------------------------------------------------------------------


def test_gap_toy_brute_force():
    lam = [1.0, 0.8, 0.0]
    mu = [1.0, 1.5, 2.0]
    tab = CoefficientTable.from_rates(lam, mu)
    sol = toy_solution(tab)
    g = gap_lower_bound(sol, tab)
    # brute force over the admissible split indices
    pi = np.exp(tab.log_pi[1:])
    phi = sol.phi[1:]
    best = math.inf
    for ntil in range(1, tab.N):
        s1 = sum(
            (pi[:n].sum() * 0 + (pi[: n] * phi[: n] ** 2).sum())
            / (pi[n - 1] * tab.lam[n] * phi[n - 1] * phi[n])
            for n in range(1, ntil + 1)
        )
        s2 = sum(
            (pi[n:] * phi[n:] ** 2).sum() / (pi[n - 1] * tab.lam[n] * phi[n - 1] * phi[n])
            for n in range(ntil + 1, tab.N)
        )
        best = min(best, s1 + s2)
    assert g == pytest.approx(1.0 / best, rel=1e-12)


def test_gap_below_oracle_gap(oracle_bundles):
    for K, b in oracle_bundles.items():
        gap = b.sol.rho1 - b.sol.rho0
        assert 0.0 < b.sol.gap_lb <= gap


def test_gap_log_floor(sweep_bundles):
    vals = [b.sol.gap_lb * math.log(K) for K, b in sweep_bundles.items()]
    assert min(vals) > 0.0
    assert all(v >= 0.5 * min(vals) for v in vals)


# -- asymptotic formula -------------------------------------------------------


def test_asymptotic_matches_logistic_specialization():
    import qsdlab.model as model_mod

    m = model_mod.RateModel.logistic(2.0, 1.0, 100.0)
    lm = model_mod.compute_landmarks(m)
    log_v, v = asymptotic_rho0(lm, m)
    lam_t, mu_t = 2.0, 1.0
    special = (
        (lam_t - mu_t) ** 2
        / math.sqrt(2.0 * math.pi * mu_t)
        * math.sqrt(m.K)
        * math.exp(-m.K * (lam_t - mu_t + mu_t * math.log(mu_t / lam_t)))
    )
    assert v == pytest.approx(special, rel=1e-3)
    # regression pin of the log value at K=100
    expect_log = (
        0.5 * math.log(100.0 * 0.5)
        + math.log((math.sqrt(2.0) - math.sqrt(0.5)) * 1.0 * 2.0 / math.sqrt(2.0 * math.pi))
        - 100.0 * (1.0 - math.log(2.0))
    )
    assert log_v == pytest.approx(expect_log, abs=2e-2)


def test_asymptotic_within_factor_two(sweep_bundles):
    for K, b in sweep_bundles.items():
        ratio = math.exp(b.sol.log_rho0 - b.sol.log_rho0_asymptotic)
        assert 0.5 <= ratio <= 2.0


# -- matching diagnostics -----------------------------------------------------


def test_DK_asymptotic_factor(sweep_bundles):
    for K, b in sweep_bundles.items():
        if K < 100:
            continue
        m, lm = b.model, b.landmarks
        lam1 = float(m.lam_tilde(1.0 / K))
        mu1 = float(m.mu_tilde(1.0 / K))
        target = (
            1.0
            / (1.0 - mu1 / lam1)
            * math.sqrt(2.0 * math.pi)
            / (lm.x_star * float(m.lam_tilde(lm.x_star)) * math.sqrt(K * lm.h_second))
        )
        assert 0.5 <= b.sol.D_K / target <= 2.0


def test_W0_nstar_asymptotic(sweep_bundles):
    for K, b in sweep_bundles.items():
        lm = b.landmarks
        W0 = spec_mod.W0_kernel(b.table)
        scale = (
            2.0
            * lm.x_star
            * float(b.model.lam_tilde(lm.x_star))
            * math.sqrt(K * lm.h_second)
            / math.sqrt(2.0 * math.pi)
        )
        assert W0[b.table.n_star] * scale == pytest.approx(1.0, abs=0.35)


def test_u0_increment_log_form(sweep_bundles):
    # ln(u0_{n*} - u0_{n*-1}) = ln sqrt(mu1/lam1) + K int_{1/K}^{n*/K} h, up to O(1/K)
    import qsdlab.model as model_mod

    for K, b in sweep_bundles.items():
        tab, lm, m = b.table, b.landmarks, b.model
        ns = tab.n_star
        log_du = -tab.log_pi[ns - 1] - math.log(tab.lam[ns - 1])
        lam1 = float(m.lam_tilde(1.0 / K))
        mu1 = float(m.mu_tilde(1.0 / K))
        H_int = model_mod.H_of(m, lm.x_star, ns / K) - model_mod.H_of(m, lm.x_star, 1.0 / K)
        target = 0.5 * math.log(mu1 / lam1) + K * H_int
        assert abs(log_du - target) <= 20.0 / K
