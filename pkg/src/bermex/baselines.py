"""Regression-based Bermudan pricers used as comparison baselines.

Both run the classical backward induction: regress realized discounted future
cashflows on basis functions of the date-n state, exercise where the
immediate payoff beats the fitted continuation value, and roll the cashflows
back.  The least-squares pricer regresses globally (optionally on in-the-money
samples only); the bundled pricer regresses locally inside equally-sized
bundles of a sorting statistic.

The fitted models expose the same ``decide_all`` surface as a trained
decision policy, so the cashflow-based exposure estimators accept them
directly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .models import PathSet, TimeGrid
from .payoffs import Contract, payoff
from .regression import BasisSet, LocalFit, bundle_split, fit_ols_local, max_price_stat, ols_solve


@dataclass
class _RegressionPricer:
    grid: TimeGrid
    contract: Contract
    r: float
    basis: BasisSet
    price_cols: tuple[int, ...]
    price: float = math.nan
    std_err: float = math.nan
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.grid.n

    def _prices(self, states: np.ndarray) -> np.ndarray:
        return states[:, list(self.price_cols)]

    def continuation_value(self, n: int, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decide(self, n: int, states: np.ndarray, _memo=None) -> np.ndarray:
        """Exercise where the payoff is positive and beats the fitted
        continuation value; maturity always exercises, t_0 never does."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if n >= self.n:
            return np.ones(states.shape[0], dtype=bool)
        if n <= 0:
            return np.zeros(states.shape[0], dtype=bool)
        g = payoff(self.contract, self._prices(states))
        return (g > self.continuation_value(n, states)) & (g > 0.0)

    def decide_all(self, paths: PathSet) -> np.ndarray:
        out = np.zeros((paths.m, self.n + 1), dtype=bool)
        out[:, self.n] = True
        for n in range(1, self.n):
            out[:, n] = self.decide(n, paths.states_at(n))
        return out

    def exercise_region(self, n: int, states: np.ndarray) -> np.ndarray:
        """Grid classifier: exercise iff the payoff is positive and >= the
        fitted continuation value (maturity: exercise wherever in the money)."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        g = payoff(self.contract, self._prices(states))
        if n >= self.n:
            return g > 0.0
        return (g >= self.continuation_value(n, states)) & (g > 0.0)


@dataclass
class LsmModel(_RegressionPricer):
    """Global-regression pricer; ``itm_only`` mirrors the pricing-oriented
    variant, the all-sample variant serves exposure work."""

    coefs: list = field(default_factory=list)
    itm_only: bool = True

    def continuation_value(self, n: int, states: np.ndarray) -> np.ndarray:
        coef = self.coefs[n]
        if coef is None:
            raise ValueError(f"no regression at date {n}")
        return self.basis.design_matrix(states) @ coef


@dataclass
class SgbmModel(_RegressionPricer):
    """Bundled local-regression pricer.

    ``target`` records what the per-bundle regressions projected: the
    recursive option value (the classical construction, priced by the direct
    estimator and typically biased a little high) or realized discounted
    cashflows (a bundled analogue of the global pricer, biased low).
    """

    fits: list = field(default_factory=list)
    n_bundles: int = 32
    bundle_stat: object = None
    target: str = "value"

    def continuation_value(self, n: int, states: np.ndarray) -> np.ndarray:
        fit: LocalFit = self.fits[n]
        if fit is None:
            raise ValueError(f"no regression at date {n}")
        design = self.basis.design_matrix(states)
        idx = fit.bundle_of(self.bundle_stat(states))
        return np.einsum("mb,mb->m", design, fit.coefs[idx])


def _backward_pass(paths: PathSet, contract: Contract, r: float, fit_date):
    """Shared cashflow recursion; ``fit_date(k, states, y, g)`` returns the
    continuation values used for the date-k exercise decision."""
    grid = paths.grid
    n = grid.n
    g_all = np.column_stack([payoff(contract, paths.prices(k)) for k in range(n + 1)])
    cf = g_all[:, n].copy()
    for k in range(n - 1, 0, -1):
        disc = math.exp(-r * (grid.exercise_dates[k + 1] - grid.exercise_dates[k]))
        y = disc * cf
        cont = fit_date(k, paths.states_at(k), y, g_all[:, k])
        exercise = (g_all[:, k] > cont) & (g_all[:, k] > 0.0)
        cf = np.where(exercise, g_all[:, k], y)
    disc0 = math.exp(-r * (grid.exercise_dates[1] - grid.exercise_dates[0]))
    mc_price = disc0 * cf.mean()
    se = disc0 * cf.std(ddof=1) / math.sqrt(paths.m)
    x0_payoff = float(g_all[0, 0])
    return max(float(mc_price), x0_payoff), float(se)


def lsm_fit(
    paths: PathSet,
    contract: Contract,
    basis: BasisSet,
    itm_only: bool,
    r: float,
) -> LsmModel:
    """Backward induction with one global regression per date.

    With ``itm_only`` the regression (and hence any exercise) is restricted
    to in-the-money samples; exposure work includes all samples.  The t_0
    price is the discounted mean of the date-1 cashflows, floored by the
    immediate payoff at the initial state.
    """
    if paths.m < basis.size:
        raise ValueError("fewer paths than basis functions")
    model = LsmModel(
        grid=paths.grid,
        contract=contract,
        r=r,
        basis=basis,
        price_cols=tuple(paths.price_cols),
        coefs=[None] * (paths.grid.n + 1),
        itm_only=itm_only,
    )

    def fit_date(k, states, y, g):
        sel = g > 0.0 if itm_only else slice(None)
        design = basis.design_matrix(states)
        design_sel = design[sel]
        if design_sel.shape[0] == 0:
            model.warnings.append(f"date {k}: no in-the-money samples, never exercised")
            model.coefs[k] = np.zeros(basis.size)
            return np.full(states.shape[0], np.inf)
        if design_sel.shape[0] < basis.size:
            warnings.warn(f"date {k}: fewer samples than basis functions", stacklevel=2)
        model.coefs[k] = ols_solve(design_sel, y[sel])
        return design @ model.coefs[k]

    model.price, model.std_err = _backward_pass(paths, contract, r, fit_date)
    return model


def sgbm_fit(
    paths: PathSet,
    contract: Contract,
    basis: BasisSet,
    n_bundles: int,
    r: float,
    bundle_stat=None,
    target: str = "value",
) -> SgbmModel:
    """Backward induction with per-bundle regressions; the exercise
    comparison uses each bundle's own fit.

    With the default ``value`` target the per-path option value
    max(payoff, fitted continuation) is rolled back and the t_0 price is the
    discounted mean of the date-1 values (direct estimator).  The
    ``cashflow`` target rolls back realized cashflows instead, mirroring the
    global pricer bundle by bundle.
    """
    if target not in ("value", "cashflow"):
        raise ValueError("target must be 'value' or 'cashflow'")
    if bundle_stat is None:
        bundle_stat = max_price_stat(paths.price_cols)
    model = SgbmModel(
        grid=paths.grid,
        contract=contract,
        r=r,
        basis=basis,
        price_cols=tuple(paths.price_cols),
        fits=[None] * (paths.grid.n + 1),
        n_bundles=n_bundles,
        bundle_stat=bundle_stat,
        target=target,
    )

    def fit_date(k, states, y, g):
        fit = fit_ols_local(states, y, basis, n_bundles, bundle_stat)
        model.fits[k] = fit
        design = basis.design_matrix(states)
        idx = fit.bundle_of(bundle_stat(states))
        return np.einsum("mb,mb->m", design, fit.coefs[idx])

    if target == "cashflow":
        model.price, model.std_err = _backward_pass(paths, contract, r, fit_date)
        return model

    grid = paths.grid
    n = grid.n
    g_all = np.column_stack([payoff(contract, paths.prices(k)) for k in range(n + 1)])
    value = g_all[:, n].copy()
    for k in range(n - 1, 0, -1):
        disc = math.exp(-r * (grid.exercise_dates[k + 1] - grid.exercise_dates[k]))
        y = disc * value
        cont = fit_date(k, paths.states_at(k), y, g_all[:, k])
        value = np.where((g_all[:, k] > cont) & (g_all[:, k] > 0.0), g_all[:, k], cont)
    disc0 = math.exp(-r * (grid.exercise_dates[1] - grid.exercise_dates[0]))
    model.price = max(float(disc0 * value.mean()), float(g_all[0, 0]))
    model.std_err = float(disc0 * value.std(ddof=1) / math.sqrt(paths.m))
    return model


def baseline_exercise_region(model: _RegressionPricer, n: int, states: np.ndarray) -> np.ndarray:
    """Boolean exercise grid for a fitted baseline model."""
    return model.exercise_region(n, states)
