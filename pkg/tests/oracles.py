"""Independent reference values for the test suite.

Everything here is deliberately built from first principles (lattice
backward induction, characteristic-function quadrature, closed-form moments)
and never calls the code paths it is used to check.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad


def binomial_bermudan(
    s0: float,
    strike: float,
    r: float,
    q: float,
    sigma: float,
    t_end: float,
    n_exercise: int,
    steps: int,
    kind: str = "put",
    exercisable_at_t0: bool = False,
) -> float:
    """Cox-Ross-Rubinstein lattice price of a Bermudan option.

    Exercise is allowed at the equally spaced dates j * t_end / n_exercise for
    j = 1..n_exercise (maturity included); ``steps`` is rounded up to a
    multiple of n_exercise so every exercise date sits on a lattice level.
    """
    steps = int(math.ceil(steps / n_exercise)) * n_exercise
    per = steps // n_exercise
    dt = t_end / steps
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    disc = math.exp(-r * dt)
    p = (math.exp((r - q) * dt) - d) / (u - d)
    if not 0.0 < p < 1.0:
        raise ValueError("lattice risk-neutral probability outside (0,1)")

    def intrinsic(level: int) -> np.ndarray:
        j = np.arange(level + 1)
        s = s0 * u ** (2 * j - level)
        return np.maximum(strike - s, 0.0) if kind == "put" else np.maximum(s - strike, 0.0)

    values = intrinsic(steps)
    for level in range(steps - 1, -1, -1):
        values = disc * (p * values[1:] + (1.0 - p) * values[:-1])
        on_exercise_date = level % per == 0 and (level > 0 or exercisable_at_t0)
        if on_exercise_date:
            values = np.maximum(values, intrinsic(level))
    return float(values[0])


def binomial_bermudan_continuation(
    s0: float,
    strike: float,
    r: float,
    q: float,
    sigma: float,
    t_end: float,
    n_exercise: int,
    steps: int,
    date_index: int,
    s_values: np.ndarray,
    kind: str = "put",
) -> np.ndarray:
    """Continuation values at one exercise date for arbitrary spot levels.

    Prices the remaining Bermudan contract started at t_{date_index} with its
    first exercise possible at t_{date_index + 1}.
    """
    remaining = n_exercise - date_index
    horizon = t_end * remaining / n_exercise
    out = np.array(
        [
            binomial_bermudan(
                s, strike, r, q, sigma, horizon, remaining, steps, kind,
                exercisable_at_t0=False,
            )
            for s in np.atleast_1d(s_values)
        ]
    )
    return out


def _heston_cf(u, s0, nu0, r, q, kappa, theta, xi, rho, t):
    """Characteristic function of log S_t (stable branch)."""
    iu = 1j * u
    beta = kappa - rho * xi * iu
    d = np.sqrt(beta**2 + xi**2 * (iu + u**2))
    g = (beta - d) / (beta + d)
    exp_dt = np.exp(-d * t)
    c = (r - q) * iu * t + (kappa * theta / xi**2) * (
        (beta - d) * t - 2.0 * np.log((1.0 - g * exp_dt) / (1.0 - g))
    )
    dd = ((beta - d) / xi**2) * ((1.0 - exp_dt) / (1.0 - g * exp_dt))
    return np.exp(c + dd * nu0 + iu * math.log(s0))


def heston_european_put(
    s0: float,
    strike: float,
    r: float,
    q: float,
    nu0: float,
    kappa: float,
    theta: float,
    xi: float,
    rho: float,
    t: float,
) -> float:
    """Semi-analytic European put by Gil-Pelaez quadrature of the
    characteristic function, via put-call parity."""
    lnk = math.log(strike)

    def cf(u):
        return _heston_cf(u, s0, nu0, r, q, kappa, theta, xi, rho, t)

    denom = cf(-1j).real

    def integrand_p1(u):
        return (np.exp(-1j * u * lnk) * cf(u - 1j) / (1j * u * denom)).real

    def integrand_p2(u):
        return (np.exp(-1j * u * lnk) * cf(u) / (1j * u)).real

    int1 = quad(integrand_p1, 1e-10, 200.0, limit=400)[0]
    int2 = quad(integrand_p2, 1e-10, 200.0, limit=400)[0]
    p1 = 0.5 + int1 / math.pi
    p2 = 0.5 + int2 / math.pi
    call = s0 * math.exp(-q * t) * p1 - strike * math.exp(-r * t) * p2
    return call - s0 * math.exp(-q * t) + strike * math.exp(-r * t)


def black_scholes_put(s0, strike, r, q, sigma, t) -> float:
    from math import erf, exp, log, sqrt

    def ncdf(x):
        return 0.5 * (1.0 + erf(x / sqrt(2.0)))

    d1 = (log(s0 / strike) + (r - q + sigma**2 / 2) * t) / (sigma * sqrt(t))
    d2 = d1 - sigma * sqrt(t)
    return strike * exp(-r * t) * ncdf(-d2) - s0 * exp(-q * t) * ncdf(-d1)


def lognormal_mean(s0, a, q, t) -> float:
    """E[S_t] under constant total drift a and dividend yield q."""
    return s0 * math.exp((a - q) * t)
