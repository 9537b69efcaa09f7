"""Expected-exposure and potential-future-exposure profiles.

Five expected-exposure estimators are provided: value-surface and cashflow
averages under the risk-neutral measure, and three real-world variants
(value surface on drift-switched paths, cashflows on drift-switched paths,
and likelihood-ratio weighting of risk-neutral cashflows).  Potential future
exposure is the empirical percentile of the per-path product of value and
survival indicator, under either measure.

All estimators share one policy-evaluation pass per path set: the global
stopping date is cached, the survival indicator at t_n is "stopped later than
t_n", and the restart stopping time coincides with the global one wherever
the indicator is alive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dos import DecisionPolicy, first_hit_indices
from .measure import likelihood_ratios
from .models import GbmModel, PathSet, parse_switch_index
from .payoffs import payoff
from .regression import ValueSurface

EE_ESTIMATORS = ("EE1_Q", "EE2_Q", "EE1_P", "EE2_P", "EE3_P")


@dataclass(frozen=True)
class ExposureRow:
    date_index: int
    t: float
    estimator: str
    measure: str
    value: float
    std_err: float | None
    alpha: float | None
    m: int
    seed: int


@dataclass
class ExposureProfile:
    """Per-date estimator values with provenance tags."""

    rows: list

    def values(self, estimator: str, alpha: float | None = None) -> np.ndarray:
        rows = [
            r
            for r in self.rows
            if r.estimator == estimator and (alpha is None or r.alpha == alpha)
        ]
        rows.sort(key=lambda r: r.date_index)
        return np.array([r.value for r in rows])

    def std_errs(self, estimator: str) -> np.ndarray:
        rows = sorted(
            (r for r in self.rows if r.estimator == estimator), key=lambda r: r.date_index
        )
        return np.array([r.std_err if r.std_err is not None else np.nan for r in rows])

    def extend(self, other: "ExposureProfile") -> "ExposureProfile":
        self.rows.extend(other.rows)
        return self


def _survival(policy: DecisionPolicy, paths: PathSet):
    """First-hit index and the per-date survival indicator 1{tau > t_n}."""
    j = first_hit_indices(policy.decide_all(paths))
    dates = np.arange(policy.n + 1)
    alive = j[:, None] > dates[None, :]
    return j, alive


def _payoff_at_stop(policy: DecisionPolicy, paths: PathSet, j: np.ndarray) -> np.ndarray:
    rows = np.arange(paths.m)
    g_all = np.column_stack(
        [payoff(policy.contract, paths.prices(k)) for k in range(policy.n + 1)]
    )
    return g_all[rows, j]


def _mean_row(values: np.ndarray) -> tuple[float, float]:
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def ee_q_cashflow(policy: DecisionPolicy, paths: PathSet, r: float | None = None) -> ExposureProfile:
    """Discounted-cashflow estimator of the risk-neutral expected exposure."""
    r = policy.r if r is None else r
    times = paths.grid.exercise_dates
    j, alive = _survival(policy, paths)
    g_stop = _payoff_at_stop(policy, paths, j)
    rows = []
    for n in range(policy.n + 1):
        vals = np.where(alive[:, n], np.exp(-r * (times[j] - times[n])) * g_stop, 0.0)
        value, se = _mean_row(vals)
        rows.append(ExposureRow(n, times[n], "EE2_Q", "Q", value, se, None, paths.m, paths.seed))
    return ExposureProfile(rows)


def ee_q_surface(policy: DecisionPolicy, surface: ValueSurface, paths: PathSet) -> ExposureProfile:
    """Value-surface estimator of the risk-neutral expected exposure."""
    times = paths.grid.exercise_dates
    _, alive = _survival(policy, paths)
    rows = []
    for n in range(policy.n + 1):
        vals = np.zeros(paths.m)
        live = alive[:, n]
        if live.any():
            vals[live] = surface.evaluate(n, paths.states_at(n)[live])
        value, se = _mean_row(vals)
        rows.append(ExposureRow(n, times[n], "EE1_Q", "Q", value, se, None, paths.m, paths.seed))
    return ExposureProfile(rows)


def _switched_set(switched, n: int) -> PathSet:
    if callable(switched):
        paths = switched(n)
    else:
        try:
            paths = switched[n]
        except (KeyError, IndexError, TypeError):
            paths = None
    if paths is None:
        raise ValueError(f"no drift-switched path set supplied for date {n}")
    idx = parse_switch_index(paths.measure)
    if idx != n:
        raise ValueError(
            f"path set for date {n} carries measure tag {paths.measure!r}; "
            f"expected a switch at that date"
        )
    return paths


def ee_p_surface(policy: DecisionPolicy, surface: ValueSurface, switched) -> ExposureProfile:
    """Real-world expected exposure from the value surface on switched paths.

    ``switched`` maps an exercise-date index in 0..N-1 to the PathSet whose
    drift switches at that date (a mapping or a callable; generating sets on
    demand keeps only one in memory).  The maturity row is identically zero
    and needs no path set.
    """
    rows = []
    m = seed = None
    for n in range(policy.n):
        paths = _switched_set(switched, n)
        m, seed = paths.m, paths.seed
        times = paths.grid.exercise_dates
        _, alive = _survival(policy, paths)
        vals = np.zeros(paths.m)
        live = alive[:, n]
        if live.any():
            vals[live] = surface.evaluate(n, paths.states_at(n)[live])
        value, se = _mean_row(vals)
        rows.append(ExposureRow(n, times[n], "EE1_P", "P", value, se, None, paths.m, paths.seed))
    t_end = policy.grid.exercise_dates[policy.n]
    rows.append(ExposureRow(policy.n, float(t_end), "EE1_P", "P", 0.0, 0.0, None, m or 0, seed or 0))
    return ExposureProfile(rows)


def ee_p_cashflow(policy: DecisionPolicy, switched, r: float | None = None) -> ExposureProfile:
    """Real-world expected exposure from cashflows along switched paths."""
    r = policy.r if r is None else r
    rows = []
    m = seed = None
    for n in range(policy.n):
        paths = _switched_set(switched, n)
        m, seed = paths.m, paths.seed
        times = paths.grid.exercise_dates
        j, alive = _survival(policy, paths)
        g_stop = _payoff_at_stop(policy, paths, j)
        vals = np.where(alive[:, n], np.exp(-r * (times[j] - times[n])) * g_stop, 0.0)
        value, se = _mean_row(vals)
        rows.append(ExposureRow(n, times[n], "EE2_P", "P", value, se, None, paths.m, paths.seed))
    t_end = policy.grid.exercise_dates[policy.n]
    rows.append(ExposureRow(policy.n, float(t_end), "EE2_P", "P", 0.0, 0.0, None, m or 0, seed or 0))
    return ExposureProfile(rows)


def ee_p_likelihood(
    policy: DecisionPolicy, paths: PathSet, model: GbmModel, r: float | None = None
) -> ExposureProfile:
    """Real-world expected exposure by likelihood-ratio weighting of
    risk-neutral cashflow paths.

    Requires closed-form transition densities, i.e. a lognormal model whose
    state is exactly the price vector; stochastic-volatility path sets are
    rejected.
    """
    if paths.state_dim != model.d or tuple(paths.price_cols) != tuple(range(model.d)):
        raise ValueError(
            "likelihood-ratio weighting needs closed-form transition densities; "
            "the path state must be the lognormal price vector (stochastic-"
            "volatility models are not supported)"
        )
    r = policy.r if r is None else r
    times = paths.grid.exercise_dates
    j, alive = _survival(policy, paths)
    g_stop = _payoff_at_stop(policy, paths, j)
    weights = likelihood_ratios(model, paths)
    rows = []
    for n in range(policy.n + 1):
        vals = np.where(
            alive[:, n], np.exp(-r * (times[j] - times[n])) * g_stop * weights[:, n], 0.0
        )
        value, se = _mean_row(vals)
        rows.append(ExposureRow(n, times[n], "EE3_P", "P", value, se, None, paths.m, paths.seed))
    return ExposureProfile(rows)


def percentile_index(alpha: float, m: int) -> int:
    """One-based order-statistic index: ceil(alpha m) for alpha >= 0.5,
    floor(alpha m) below."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    i = math.ceil(alpha * m) if alpha >= 0.5 else math.floor(alpha * m)
    if i < 1:
        raise ValueError(f"percentile index is zero for alpha={alpha}, M={m}")
    return i


def _pfe_from_products(products: np.ndarray, alphas) -> list[float]:
    out = []
    for alpha in alphas:
        i = percentile_index(alpha, products.size)
        out.append(float(np.partition(products, i - 1)[i - 1]))
    return out


def pfe_q(
    policy: DecisionPolicy, surface: ValueSurface, paths: PathSet, alphas
) -> ExposureProfile:
    """Risk-neutral potential future exposure at each requested percentile.

    The order statistic runs over the full product vector value x indicator,
    zeros from exercised paths included.
    """
    times = paths.grid.exercise_dates
    _, alive = _survival(policy, paths)
    rows = []
    for n in range(policy.n + 1):
        products = np.zeros(paths.m)
        live = alive[:, n]
        if n < policy.n and live.any():
            products[live] = surface.evaluate(n, paths.states_at(n)[live])
        for alpha, value in zip(alphas, _pfe_from_products(products, alphas)):
            rows.append(
                ExposureRow(n, times[n], "PFE_Q", "Q", value, None, alpha, paths.m, paths.seed)
            )
    return ExposureProfile(rows)


def pfe_p(
    policy: DecisionPolicy, surface: ValueSurface, switched, alphas
) -> ExposureProfile:
    """Real-world potential future exposure on drift-switched path sets."""
    rows = []
    m = seed = None
    for n in range(policy.n):
        paths = _switched_set(switched, n)
        m, seed = paths.m, paths.seed
        times = paths.grid.exercise_dates
        _, alive = _survival(policy, paths)
        products = np.zeros(paths.m)
        live = alive[:, n]
        if live.any():
            products[live] = surface.evaluate(n, paths.states_at(n)[live])
        for alpha, value in zip(alphas, _pfe_from_products(products, alphas)):
            rows.append(
                ExposureRow(n, times[n], "PFE_P", "P", value, None, alpha, paths.m, paths.seed)
            )
    t_end = policy.grid.exercise_dates[policy.n]
    for alpha in alphas:
        rows.append(
            ExposureRow(policy.n, float(t_end), "PFE_P", "P", 0.0, None, alpha, m or 0, seed or 0)
        )
    return ExposureProfile(rows)


def write_exposure_csv(profile: ExposureProfile, file) -> None:
    """CSV rows with 17-significant-digit floats and '.' decimal separator."""
    import csv

    def fmt(x):
        return "" if x is None else format(x, ".17g")

    with open(file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["date_index", "t", "estimator", "measure", "value", "std_err", "alpha", "M", "seed"]
        )
        for r in sorted(profile.rows, key=lambda r: (r.estimator, r.alpha or 0.0, r.date_index)):
            writer.writerow(
                [r.date_index, fmt(r.t), r.estimator, r.measure, fmt(r.value), fmt(r.std_err), fmt(r.alpha), r.m, r.seed]
            )
