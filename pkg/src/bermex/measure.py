"""Transition densities of the multi-asset lognormal model and the
path-cumulative likelihood ratio that reweights risk-neutral samples into
real-world expectations.
"""

from __future__ import annotations

import numpy as np

from .models import GbmModel, PathSet

_LOG_2PI = np.log(2.0 * np.pi)


def _step_moments(model: GbmModel, measure: str, dt: float):
    a = model.drift(measure)
    mean = (a - model.q - 0.5 * model.sigma**2) * dt
    cov = np.outer(model.sigma, model.sigma) * model.rho * dt
    return mean, cov


def gbm_log_transition_density(
    model: GbmModel, measure: str, t_from: float, t_to: float, x_from, x_to
) -> np.ndarray | float:
    """Log of the lognormal transition density p(x_to at t_to | x_from at t_from).

    Accepts single states of shape (d,) or batches of shape (M, d); the
    uncorrelated case reduces to the product of univariate densities.
    """
    if t_to <= t_from:
        raise ValueError("t_to must exceed t_from")
    scalar = np.asarray(x_to).ndim <= 1
    x_from = np.atleast_2d(np.asarray(x_from, dtype=np.float64))
    x_to = np.atleast_2d(np.asarray(x_to, dtype=np.float64))
    if np.any(x_from <= 0) or np.any(x_to <= 0):
        raise ValueError("lognormal transition density requires positive states")
    if np.any(model.sigma <= 0):
        raise ValueError("transition density requires strictly positive volatilities")

    mean, cov = _step_moments(model, measure, t_to - t_from)
    chol = np.linalg.cholesky(cov)
    y = np.log(x_to) - np.log(x_from) - mean
    z = np.linalg.solve(chol, y.T).T
    quad = np.sum(z**2, axis=1)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    log_norm = -0.5 * (model.d * _LOG_2PI + log_det + quad)
    out = log_norm - np.sum(np.log(x_to), axis=1)
    return float(out[0]) if scalar else out


def gbm_transition_density(
    model: GbmModel, measure: str, t_from: float, t_to: float, x_from, x_to
) -> np.ndarray | float:
    """Multivariate lognormal transition density value (not log)."""
    return np.exp(gbm_log_transition_density(model, measure, t_from, t_to, x_from, x_to))


def _log_ratio_step(model: GbmModel, dt: float, log_increments: np.ndarray) -> np.ndarray:
    """log p/q of one transition for a batch of log-increments (M, d).

    The Jacobian and normalization terms of the two lognormal densities are
    identical and cancel exactly, leaving the difference of quadratic forms.
    """
    mean_p, cov = _step_moments(model, "P", dt)
    mean_q, _ = _step_moments(model, "Q", dt)
    chol = np.linalg.cholesky(cov)
    z_p = np.linalg.solve(chol, (log_increments - mean_p).T).T
    z_q = np.linalg.solve(chol, (log_increments - mean_q).T).T
    return 0.5 * (np.sum(z_q**2, axis=1) - np.sum(z_p**2, axis=1))


def likelihood_ratio(model: GbmModel, times, path) -> float:
    """Radon-Nikodym weight of one path observed at ``times``.

    ``path`` holds the states at times[0..n]; the result is the product of
    real-world over risk-neutral transition densities, accumulated in
    log-space and exponentiated once.  An empty product (single state) is 1.
    """
    times = np.asarray(times, dtype=np.float64)
    path = np.atleast_2d(np.asarray(path, dtype=np.float64))
    if path.shape[0] != times.size:
        raise ValueError("path and times must have matching lengths")
    if np.any(path <= 0):
        raise ValueError("likelihood ratio requires strictly positive states")
    if model.mu_p is None:
        raise ValueError("real-world drift mu_p is not set on this model")
    log_l = 0.0
    logs = np.log(path)
    for k in range(1, times.size):
        inc = logs[k : k + 1] - logs[k - 1 : k]
        log_l += float(_log_ratio_step(model, times[k] - times[k - 1], inc)[0])
    return float(np.exp(log_l))


def likelihood_ratios(model: GbmModel, paths: PathSet) -> np.ndarray:
    """Cumulative likelihood-ratio matrix l(t_n) for every path and date.

    Shape (M, N+1); column 0 is identically 1 (empty product).
    """
    if model.mu_p is None:
        raise ValueError("real-world drift mu_p is not set on this model")
    if np.any(paths.states <= 0):
        raise ValueError("likelihood ratio requires strictly positive states")
    m, n_dates, _ = paths.states.shape
    logs = np.log(paths.states)
    log_l = np.zeros((m, n_dates))
    dts = paths.grid.dt
    for k in range(1, n_dates):
        inc = logs[:, k, :] - logs[:, k - 1, :]
        log_l[:, k] = log_l[:, k - 1] + _log_ratio_step(model, dts[k - 1], inc)
    return np.exp(log_l)
