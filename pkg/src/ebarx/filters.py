"""Conditionally Gaussian Kalman filters for Bayesian ARX estimation.

Both directions use the sigma2-normalized recursion: with ``P`` the
normalized conditional covariance of the parameter,

    k  = P phi / (phi' P phi + 1)
    x' = x + k (y - phi' x)
    P' = P - P phi phi' P / (phi' P phi + 1)

The forward filter consumes rows in increasing time, the backward filter
consumes future-data regressors in decreasing time.
"""

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import _fmt
from .estimators import Prior
from .model import build_regressors
from .numerics import spd_inverse, symmetrize

DEFAULT_TERMINAL_P = 1e3


class IllConditioned(UserWarning):
    """Recovered prior needed eigenvalue repair or is badly conditioned."""


@dataclass(frozen=True)
class FilterState:
    """Snapshot after processing ``count`` samples.

    ``innovation`` and ``gain`` belong to the step that produced the state
    (NaN / None for an initial state). ``lambda2`` is only tracked by the
    backward filter.
    """

    t: int
    xhat: np.ndarray
    p_norm: np.ndarray
    direction: str
    sigma2_hat: float = float("nan")
    lambda2: float = float("nan")
    count: int = 0
    lambda_n: int = 0
    innovation: float = float("nan")
    gain: np.ndarray = None


@dataclass(frozen=True)
class FilterTrace:
    states: list
    innovations: np.ndarray
    gains: np.ndarray

    @property
    def final(self):
        return self.states[-1]


def _riccati(x, P, phi, y):
    Pphi = P @ phi
    s = float(phi @ Pphi) + 1.0
    gain = Pphi / s
    e = float(y - phi @ x)
    return x + gain * e, symmetrize(P - np.outer(Pphi, Pphi) / s), gain, e, s


def kalman_update_unnormalized(x, cov, phi, y, sigma2):
    """One update with the unnormalized covariance and ``+ sigma2`` bracket."""
    Sphi = cov @ phi
    s = float(phi @ Sphi) + sigma2
    gain = Sphi / s
    return x + gain * float(y - phi @ x), symmetrize(cov - np.outer(Sphi, Sphi) / s)


def initial_state(mean, p_norm, direction, t=0, lambda2=None):
    """A supplied ``lambda2`` enters the backward average as one pseudo-sample."""
    lam = float("nan") if lambda2 is None else float(lambda2)
    return FilterState(t, np.array(mean, dtype=float), symmetrize(p_norm), direction,
                       lambda2=lam, lambda_n=0 if lambda2 is None else 1)


def forward_step(s, phi, y_next):
    """Condition on one more forward sample ``(phi(t+1), y(t+1))``.

    ``sigma2_hat`` is the running mean of squared innovations divided by
    their normalized variance ``phi' P phi + 1``.
    """
    if s.direction != "forward":
        raise ValueError("forward_step needs a forward state")
    phi = np.asarray(phi, dtype=float)
    x, P, gain, e, bracket = _riccati(s.xhat, s.p_norm, phi, y_next)
    c = s.count
    prev = 0.0 if c == 0 else s.sigma2_hat
    s2 = (c * prev + e * e / bracket) / (c + 1)
    return FilterState(s.t + 1, x, P, "forward", s2, s.lambda2, c + 1, 0, e, gain)


def backward_step(s, phi_bar, y_prev, residual="posterior"):
    """Condition on one more past sample ``(phi_bar(t-1), y(t-1))``.

    ``lambda2`` is a running mean of squared residuals. With
    ``residual="posterior"`` the residual uses the updated mean
    ``y(t-1) - phi_bar' x(t-1)``; ``"innovation"`` uses the pre-update mean.
    ``sigma2_hat = lambda2 / (phi_bar' P(t-1) phi_bar + 1)``.
    """
    if s.direction != "backward":
        raise ValueError("backward_step needs a backward state")
    phi = np.asarray(phi_bar, dtype=float)
    x, P, gain, e, bracket = _riccati(s.xhat, s.p_norm, phi, y_prev)
    if residual == "posterior":
        r = e / bracket
    elif residual == "innovation":
        r = e
    else:
        raise ValueError(f"unknown residual kind {residual!r}")
    k = s.lambda_n
    lam2 = r * r if k == 0 else (k * s.lambda2 + r * r) / (k + 1)
    s2 = lam2 / (float(phi @ P @ phi) + 1.0)
    return FilterState(s.t - 1, x, P, "backward", s2, lam2, s.count + 1, k + 1, e, gain)


def _trace(states):
    steps = states[1:]
    p = states[0].xhat.size
    innov = np.array([st.innovation for st in steps])
    gains = np.array([st.gain for st in steps]) if steps else np.zeros((0, p))
    return FilterTrace(states, innov, gains)


def run_forward(r, prior):
    """Sequential posterior of the parameter given rows ``1..t``.

    Starts at ``(prior.mu, prior.pi)``; ``states[k]`` is the state after the
    first ``k`` rows, so ``states[0]`` is the prior itself.
    """
    if r.orientation != "forward":
        raise ValueError("run_forward needs a forward RegressorSet")
    t0 = int(r.times[0]) - 1 if r.rows else 0
    s = initial_state(prior.mu, prior.pi, "forward", t=t0)
    states = [s]
    for phi, y in zip(r.phi, r.y):
        s = forward_step(s, phi, y)
        states.append(s)
    return _trace(states)


def run_backward(r, terminal_mean=None, terminal_p=None, terminal_lambda2=None,
                 residual="posterior"):
    """Sequential posterior of the parameter given future data.

    Defaults to a diffuse terminal condition ``x = 0``, ``P = 1e3 I``. When
    ``terminal_lambda2`` is None the residual average starts from the first
    processed residual.
    """
    if r.orientation != "backward":
        raise ValueError("run_backward needs a backward RegressorSet")
    p = r.p
    mean = np.zeros(p) if terminal_mean is None else terminal_mean
    P = DEFAULT_TERMINAL_P * np.eye(p) if terminal_p is None else terminal_p
    t0 = int(r.times[0]) + 1 if r.rows else 0
    s = initial_state(mean, P, "backward", t=t0, lambda2=terminal_lambda2)
    states = [s]
    for phi, y in zip(r.phi, r.y):
        s = backward_step(s, phi, y, residual)
        states.append(s)
    return _trace(states)


def batch_sigma2(r, xhat, dof=False):
    """Mean squared residual ``||y - Phi x||^2 / t`` (or ``/(t - p)``)."""
    resid = r.y - r.phi @ xhat
    denom = r.rows - r.p if dof else r.rows
    return float(resid @ resid) / denom


@dataclass(frozen=True)
class PriorRecovery:
    pi_inv: np.ndarray
    pi: np.ndarray
    clipped: bool
    condition: float

    @property
    def ill_conditioned(self):
        return self.clipped or self.condition > 1e10


def recover_prior(state, gram, filter_sigma2=1.0, eps=1e-8, warn=True):
    """Back out the normalized prior variance from a filtered covariance.

    ``pi_inv = sigma2_hat * P^{-1} - gram`` with ``P = filter_sigma2 * p_norm``
    the unnormalized covariance the filter reports. Non-positive
    eigenvalues of ``pi_inv`` are clipped to ``eps``; the result is flagged
    when clipping happened or the condition number exceeds 1e10.
    """
    if not state.sigma2_hat > 0:
        raise ValueError("state.sigma2_hat must be positive")
    p_inv = spd_inverse(filter_sigma2 * state.p_norm)
    pi_inv = symmetrize(state.sigma2_hat * p_inv - np.asarray(gram, dtype=float))
    vals, vecs = np.linalg.eigh(pi_inv)
    clipped = bool(np.any(vals < eps))
    if clipped:
        vals = np.maximum(vals, eps)
        pi_inv = symmetrize((vecs * vals) @ vecs.T)
    pi = symmetrize((vecs / vals) @ vecs.T)
    out = PriorRecovery(pi_inv, pi, clipped, float(vals.max() / vals.min()))
    if warn and out.ill_conditioned:
        warnings.warn(
            f"recovered prior is ill-conditioned (clipped={clipped}, "
            f"cond={out.condition:.3g})", IllConditioned, stacklevel=2)
    return out


@dataclass(frozen=True)
class HyperparameterEstimate:
    prior: Prior
    recovery: PriorRecovery
    sigma2_hat: float
    forward: FilterTrace
    backward: FilterTrace
    gram: np.ndarray


def estimate_hyperparameters(d, n, m=0, prior_init=None, sigma2_source="backward",
                             residual="posterior", warn=True):
    """Backward-filter estimate of ``(sigma2, pi)`` for dataset ``d``.

    With ``prior_init`` the forward filter is run from it, the backward
    filter is started at the forward terminal state, and the prior is
    recovered from the forward ``P(N)`` and ``Phi_N' Phi_N`` with the noise
    variance from the backward pass. Without ``prior_init`` the backward
    filter starts diffuse and the recovery uses its own final covariance and
    the backward Gram matrix.

    ``sigma2_source`` picks the noise variance: ``"backward"`` (final
    backward estimate), ``"forward"`` (batch mean squared residual at ``N``)
    or ``"forward-dof"`` (same, divided by ``N - p``).
    """
    fwd_r = build_regressors(d, n, m, "forward")
    bwd_r = build_regressors(d, n, m, "backward")
    if prior_init is not None:
        fwd = run_forward(fwd_r, prior_init)
        end = fwd.final
        bwd = run_backward(bwd_r, end.xhat, end.p_norm, residual=residual)
        base, gram = end, fwd_r.gram()
    else:
        fwd = None
        bwd = run_backward(bwd_r, residual=residual)
        base, gram = bwd.final, bwd_r.gram()
    if sigma2_source == "backward":
        s2 = bwd.final.sigma2_hat
    elif sigma2_source in ("forward", "forward-dof"):
        src_r, src_x = (fwd_r, fwd.final.xhat) if fwd is not None else (bwd_r, bwd.final.xhat)
        s2 = batch_sigma2(src_r, src_x, dof=sigma2_source == "forward-dof")
    else:
        raise ValueError(f"unknown sigma2_source {sigma2_source!r}")
    rec = recover_prior(replace(base, sigma2_hat=s2), gram, warn=warn)
    mu = np.zeros(fwd_r.p) if prior_init is None else prior_init.mu
    return HyperparameterEstimate(Prior(mu, s2, rec.pi), rec, s2, fwd, bwd, gram)


def write_trace_csv(trace, path):
    """Header ``step,t,xhat_1..xhat_p,trP,innovation,sigma2_hat,lambda2``."""
    p = trace.states[0].xhat.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t"] + [f"xhat_{i + 1}" for i in range(p)]
                   + ["trP", "innovation", "sigma2_hat", "lambda2"])
        for k, st in enumerate(trace.states):
            w.writerow([str(k), str(st.t)] + [_fmt.num(v) for v in st.xhat]
                       + [_fmt.num(np.trace(st.p_norm)), _fmt.num(st.innovation),
                          _fmt.num(st.sigma2_hat), _fmt.num(st.lambda2)])
