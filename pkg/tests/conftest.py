import numpy as np
import pytest

from qsdlab import model as model_mod
from qsdlab import qsd as qsd_mod
from qsdlab import spectral as spec_mod


class Bundle:
    """One fully analyzed (model, K) case."""

    def __init__(self, model, oracle=False):
        self.model = model
        self.landmarks = model_mod.compute_landmarks(model)
        self.table = model_mod.build_table(model, self.landmarks)
        self.sol = spec_mod.analyze_spectrum(model, self.landmarks, self.table, oracle=oracle)
        self.qsd = qsd_mod.analyze_qsd(self.sol, self.table, self.landmarks)


def make_bundle(K, oracle=False, lam=2.0, mu=1.0):
    return Bundle(model_mod.RateModel.logistic(lam, mu, K), oracle=oracle)


@pytest.fixture(scope="session")
def b30():
    """Logistic{2,1} at K=30 with the eigensolver oracle."""
    return make_bundle(30, oracle=True)


@pytest.fixture(scope="session")
def b15():
    """Logistic{2,1} at K=15, the transient-solver scale."""
    return make_bundle(15)


@pytest.fixture(scope="session")
def b20():
    return make_bundle(20)


@pytest.fixture(scope="session")
def sweep_bundles():
    """Logistic{2,1} across the sweep grid used by the asymptotic criteria."""
    return {K: make_bundle(K) for K in (50, 100, 200, 400, 800)}


@pytest.fixture(scope="session")
def oracle_bundles():
    """Small-K cases where the tridiagonal oracle is fully trusted."""
    return {K: make_bundle(K, oracle=True) for K in (20, 30, 40, 60)}


@pytest.fixture(scope="session")
def phi_oracle_30(b30):
    evals, phi = spec_mod.tridiag_top_eigs(b30.table, 2)
    return evals, phi


def two_state_toy():
    """lam1=1, mu1=1, lam2=0, mu2=2: top eigenvalue of L is sqrt(2) - 2."""
    return model_mod.CoefficientTable.from_rates([1.0, 0.0], [1.0, 2.0])


def toy_solution(table):
    """SpectralSolution for a toy chain, filled from the tridiagonal oracle."""
    evals, phi = spec_mod.tridiag_top_eigs(table, min(2, table.N))
    sol = spec_mod.SpectralSolution(rho0=float(-evals[0]), phi=phi)
    if len(evals) > 1:
        sol.rho1 = float(-evals[1])
    return sol
