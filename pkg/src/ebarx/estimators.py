"""Closed-form estimators and their bias / MSE expressions.

All covariance-like matrices are written in terms of the normalized prior
variance ``pi`` (the prior on the parameter is ``N(mu, sigma2 * pi)``).
Expressions that classically need ``pi^{-1}`` are rearranged, e.g.
``(D + pi^{-1})^{-1} pi^{-1} = (I + pi D)^{-1}``, so they stay finite as
``pi -> 0``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefinite, RankDeficient
from .numerics import PIVOT_TOL, cholesky, spd_inverse, symmetrize


@dataclass(frozen=True)
class Prior:
    """Gaussian prior ``N(mu, sigma2 * pi)`` on the parameter vector."""

    mu: np.ndarray
    sigma2: float
    pi: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        pi = symmetrize(self.pi)
        if pi.shape != (mu.size, mu.size):
            raise ValueError(f"pi must be {mu.size}x{mu.size}, got {pi.shape}")
        if not self.sigma2 > 0:
            raise ValueError("prior sigma2 must be positive")
        cholesky(pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "pi", pi)

    @classmethod
    def isotropic(cls, p, pi_scale, sigma2=1.0, mu=None):
        mu = np.zeros(p) if mu is None else mu
        return cls(mu, sigma2, pi_scale * np.eye(p))

    @property
    def p(self):
        return self.mu.size

    @property
    def p0(self):
        """Unnormalized prior variance ``sigma2 * pi``."""
        return self.sigma2 * self.pi


@dataclass(frozen=True)
class EstimateReport:
    estimate: np.ndarray
    variance: np.ndarray
    bias: np.ndarray = None
    scalar_mse: float = None


def _gram_inverse(gram):
    try:
        return spd_inverse(gram)
    except NotPositiveDefinite as exc:
        raise RankDeficient(
            f"regressor Gram matrix is singular (pivot {exc.index + 1} < {PIVOT_TOL})") from exc


def _mse(bias, variance):
    b2 = 0.0 if bias is None else float(bias @ bias)
    return b2 + float(np.trace(variance))


def least_squares(r):
    """PEM / least-squares fit with residual-variance covariance."""
    gram_inv = _gram_inverse(r.gram())
    est = gram_inv @ (r.phi.T @ r.y)
    resid = r.y - r.phi @ est
    s2 = float(resid @ resid) / r.rows
    var = s2 * gram_inv
    return EstimateReport(est, var, None, _mse(None, var))


def marginal_estimate(r, prior):
    """Estimate of the prior mean from the marginal model of ``y``.

    In parameter space ``Phi' R^{-1} = (I + D pi)^{-1} Phi'`` with
    ``D = Phi' Phi`` (inversion lemma on ``R = I + Phi pi Phi'``), so the
    generalized least-squares normal equations
    ``(I + D pi)^{-1} D mu = (I + D pi)^{-1} Phi' y`` reduce to
    ``D mu = Phi' y``. The prior only enters the variance
    ``sigma2 [D^{-1} + pi]``, whose trace is also the MSE (the estimator is
    unbiased).
    """
    gram_inv = _gram_inverse(r.gram())
    est = gram_inv @ (r.phi.T @ r.y)
    var = prior.sigma2 * symmetrize(gram_inv + prior.pi)
    return EstimateReport(est, var, np.zeros_like(est), _mse(None, var))


def _posterior_factor(gram, pi):
    """``(I + pi D)^{-1}`` and ``(D + pi^{-1})^{-1} = (I + pi D)^{-1} pi``."""
    p = gram.shape[0]
    shrink = np.linalg.solve(np.eye(p) + pi @ gram, np.eye(p))
    cov = symmetrize(shrink @ pi)
    cholesky(cov)
    return shrink, cov


def bayes_posterior(r, prior):
    """Gaussian posterior mean and variance for ``y = Phi x + w``."""
    gram = r.gram() if r.rows else np.zeros((prior.p, prior.p))
    _, cov = _posterior_factor(gram, prior.pi)
    resid = r.y - r.phi @ prior.mu
    est = prior.mu + cov @ (r.phi.T @ resid)
    var = prior.sigma2 * cov
    return EstimateReport(est, var, None, _mse(None, var))


def eb_bias(r, prior, theta0):
    """Bias ``[D + pi^{-1}]^{-1} pi^{-1} (mu - theta0)`` of the posterior mean."""
    shrink, _ = _posterior_factor(r.gram(), prior.pi)
    return shrink @ (prior.mu - np.asarray(theta0, dtype=float))


def eb_mse(r, prior, theta0):
    """Squared bias norm plus ``sigma2 * tr[D + pi^{-1}]^{-1}``."""
    shrink, cov = _posterior_factor(r.gram(), prior.pi)
    bias = shrink @ (prior.mu - np.asarray(theta0, dtype=float))
    return float(bias @ bias) + prior.sigma2 * float(np.trace(cov))


def eb_report(r, prior, theta0):
    """Posterior estimate bundled with its theoretical bias and MSE."""
    post = bayes_posterior(r, prior)
    bias = eb_bias(r, prior, theta0)
    return EstimateReport(post.estimate, post.variance, bias, _mse(bias, post.variance))


def example51_curves(theta0, delta_sq, pi_grid):
    """Scalar AR(1) error curves with ``mu = 0`` and unit noise variance.

    Returns an array of rows ``(pi, e2_eb, e2_m)`` where
    ``e2_eb = theta0^2 / (1 + D pi)^2 + pi / (1 + D pi)`` and
    ``e2_m = 1 / D + pi`` with ``D = delta_sq``.
    """
    if not delta_sq > 0:
        raise ValueError("delta_sq must be positive")
    pis = np.asarray(pi_grid, dtype=float)
    if np.any(pis < 0):
        raise ValueError("pi values must be non-negative")
    g = 1.0 + delta_sq * pis
    e2_eb = theta0 ** 2 / g ** 2 + pis / g
    e2_m = 1.0 / delta_sq + pis
    return np.column_stack([pis, e2_eb, e2_m])
