"""Monte-Carlo path generators: exact multi-asset GBM, drift-switched GBM,
and the quadratic-exponential discretization of the Heston model.

Only exercise-date states are stored; substep values are consumed while
stepping.  All draws come from per-path counter streams (see ``bermex.rng``)
so identical (model, grid, M, measure, seed) inputs give bit-identical paths
and growing M leaves earlier paths untouched.
"""

from __future__ import annotations

import math

import numpy as np

from . import rng
from .models import (
    MEASURE_P,
    MEASURE_Q,
    GbmModel,
    HestonModel,
    PathSet,
    TimeGrid,
    switched_measure,
)

QE_PSI_THRESHOLD = 1.5


def _gbm_paths(
    model: GbmModel,
    grid: TimeGrid,
    m: int,
    seed: int,
    drift_for_step,
) -> np.ndarray:
    d = model.d
    sub = grid.substeps_per_interval
    ticks_per_step = (d + 1) // 2
    factor = model.corr_factor
    sig = model.sigma

    log_s = np.broadcast_to(np.log(model.s0), (m, d)).copy()
    states = np.empty((m, grid.n + 1, d))
    states[:, 0, :] = model.s0

    step = 0
    for n in range(grid.n):
        dt = grid.dt[n] / sub
        sqdt = math.sqrt(dt)
        for s in range(sub):
            t_end = grid.exercise_dates[n] + (s + 1) * dt
            a = drift_for_step(t_end)
            z = rng.normals(seed, m, step * ticks_per_step, ticks_per_step)[:, :d]
            corr = z @ factor.T
            log_s += (a - model.q - 0.5 * sig**2) * dt + sig * sqdt * corr
            step += 1
        states[:, n + 1, :] = np.exp(log_s)
    return states


def simulate_gbm(model: GbmModel, grid: TimeGrid, m: int, measure: str, seed: int) -> PathSet:
    """Exact lognormal stepping under the risk-neutral or real-world measure."""
    if measure not in (MEASURE_Q, MEASURE_P):
        raise ValueError(f"measure must be Q or P, got {measure!r}")
    a = model.drift(measure)
    states = _gbm_paths(model, grid, m, seed, lambda t_end: a)
    return PathSet(states, grid, measure, seed)


def simulate_switched(
    model: GbmModel, grid: TimeGrid, switch_date: float, m: int, seed: int
) -> PathSet:
    """Real-world drift up to and including the switch date, risk-neutral after.

    The switch date must be an exercise date; the marginal law at the switch
    date then matches a pure real-world simulation (with the same seed the
    paths agree bit-for-bit up to that date).
    """
    switch_index = grid.index_of(switch_date)
    t_switch = grid.exercise_dates[switch_index]
    a_p = model.drift(MEASURE_P)
    a_q = model.drift(MEASURE_Q)
    tol = 1e-12 * max(1.0, abs(t_switch))

    def drift_for_step(t_end: float) -> np.ndarray:
        return a_p if t_end <= t_switch + tol else a_q

    states = _gbm_paths(model, grid, m, seed, drift_for_step)
    return PathSet(states, grid, switched_measure(switch_index), seed)


def simulate_heston(
    model: HestonModel,
    grid: TimeGrid,
    m: int,
    seed: int,
    martingale_correction: bool = False,
) -> PathSet:
    """Quadratic-exponential stepping of (variance, price).

    Moment-matched variance sampling switches between the quadratic and the
    exponential scheme at psi = 1.5; the log-price update uses the standard
    correlation-consistent discretization with central time weights.  State
    column 0 is the variance, column 1 the price.
    """
    kappa, theta, xi, rho = model.kappa, model.theta, model.xi, model.rho_nu_s
    sub = grid.substeps_per_interval

    nu = np.full(m, model.nu0)
    log_s = np.full(m, math.log(model.s0))
    states = np.empty((m, grid.n + 1, 2))
    states[:, 0, 0] = model.nu0
    states[:, 0, 1] = model.s0

    step = 0
    for n in range(grid.n):
        dt = grid.dt[n] / sub
        e = math.exp(-kappa * dt)
        # per-substep constants of the log-price update
        g1 = g2 = 0.5
        k0 = -rho * kappa * theta * dt / xi
        k1 = g1 * dt * (kappa * rho / xi - 0.5) - rho / xi
        k2 = g2 * dt * (kappa * rho / xi - 0.5) + rho / xi
        k3 = g1 * dt * (1.0 - rho**2)
        k4 = g2 * dt * (1.0 - rho**2)
        a_mc = k2 + 0.5 * k4
        for _ in range(sub):
            u = rng.uniforms(seed, m, 2 * step, 2)
            radius = np.sqrt(-2.0 * np.log(u[:, 0]))
            angle = 2.0 * np.pi * u[:, 1]
            z_v = radius * np.cos(angle)
            z_s = radius * np.sin(angle)
            u_exp = u[:, 2]

            mean = theta + (nu - theta) * e
            var = (nu * xi**2 * e / kappa) * (1.0 - e) + (theta * xi**2 / (2.0 * kappa)) * (
                1.0 - e
            ) ** 2
            psi = var / mean**2

            # quadratic branch (psi <= 1.5)
            psi_q = np.minimum(psi, 2.0 - 1e-12)
            inv2 = 2.0 / psi_q
            b2 = inv2 - 1.0 + np.sqrt(inv2 * np.maximum(inv2 - 1.0, 0.0))
            a = mean / (1.0 + b2)
            nu_quad = a * (np.sqrt(b2) + z_v) ** 2

            # exponential branch (psi > 1.5)
            p = (psi - 1.0) / (psi + 1.0)
            beta = (1.0 - p) / mean
            with np.errstate(divide="ignore", invalid="ignore"):
                nu_exp = np.where(
                    u_exp <= p, 0.0, np.log((1.0 - p) / (1.0 - u_exp)) / beta
                )

            quad = psi <= QE_PSI_THRESHOLD
            nu_next = np.where(quad, nu_quad, nu_exp)

            k0_eff = k0
            if martingale_correction:
                k0_quad = np.full(m, k0)
                ok_q = a_mc < 1.0 / (2.0 * a)
                k0_quad[ok_q] = (
                    -(a_mc * b2[ok_q] * a[ok_q]) / (1.0 - 2.0 * a_mc * a[ok_q])
                    + 0.5 * np.log(1.0 - 2.0 * a_mc * a[ok_q])
                    - (k1 + 0.5 * k3) * nu[ok_q]
                )
                k0_exp = np.full(m, k0)
                ok_e = a_mc < beta
                k0_exp[ok_e] = (
                    -np.log(p[ok_e] + beta[ok_e] * (1.0 - p[ok_e]) / (beta[ok_e] - a_mc))
                    - (k1 + 0.5 * k3) * nu[ok_e]
                )
                k0_eff = np.where(quad, k0_quad, k0_exp)

            log_s = (
                log_s
                + (model.r - model.q) * dt
                + k0_eff
                + k1 * nu
                + k2 * nu_next
                + np.sqrt(np.maximum(k3 * nu + k4 * nu_next, 0.0)) * z_s
            )
            nu = nu_next
            step += 1
        states[:, n + 1, 0] = nu
        states[:, n + 1, 1] = np.exp(log_s)
    return PathSet(states, grid, MEASURE_Q, seed, price_cols=(1,))
