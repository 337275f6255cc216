import numpy as np
import pytest

from ebarx.model import ArxSpec, build_regressors, simulate_fixed

AR2 = ArxSpec(2, 0, (1.5, -0.7))


def batch_posterior(phi, y, mu, pi):
    """Gaussian posterior by direct normal equations with ridge term pi^{-1}."""
    pi_inv = np.linalg.inv(pi)
    P = np.linalg.inv(phi.T @ phi + pi_inv)
    x = P @ (phi.T @ y + pi_inv @ mu)
    return x, P


def random_spd(rng, p, scale=1.0):
    a = rng.standard_normal((p, p))
    return scale * (a @ a.T / p + 0.1 * np.eye(p))


def rel(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b)


@pytest.fixture
def ar2_data():
    d = simulate_fixed(AR2, 200, seed=7)
    return d, build_regressors(d, 2, 0, "forward")
