"""Learning exercise decisions by backward training of one network per date.

Each exercise date 1..N-1 gets a small network whose smoothed output F is
trained to maximize the mean of F * immediate payoff + (1 - F) * discounted
future cashflow; the hard decision thresholds F at one half.  The decision at
t_0 is fixed to "hold" and the decision at maturity to "exercise".

Three training filters are supported: A1 trains on all samples, A2 restricts
to in-the-money samples and masks decisions by moneyness, A3 restricts to
samples already inside the next date's exercise region and nests decisions so
exercise regions cannot shrink as time moves forward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .models import PathSet, TimeGrid
from .payoffs import Contract, payoff
from .seeding import derive_seed

FILTER_MODES = ("A1", "A2", "A3")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization budget and structural switches for policy training."""

    batch_size: int = 8192
    steps_fresh: int = 3000
    steps_warm: int = 600
    lr_fresh: float = 1e-3
    lr_warm: float = 1e-4
    filter_mode: str = "A2"
    augment_payoff: bool = True
    warm_start: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.filter_mode not in FILTER_MODES:
            raise ValueError(f"filter_mode must be one of {FILTER_MODES}")
        if self.steps_fresh < 1 or self.steps_warm < 1 or self.batch_size < 1:
            raise ValueError("steps and batch size must be >= 1")


@dataclass
class DecisionPolicy:
    """Trained stopping rule: one network per interior exercise date.

    ``nets[n]`` is None for n = 0 and n = N (those decisions are hard-coded)
    and for degenerate dates where the training subset was empty; degenerate
    dates never exercise.
    """

    grid: TimeGrid
    contract: Contract
    r: float
    filter_mode: str
    augment_payoff: bool
    spec: nn.NetSpec
    nets: list
    scalers: list
    degenerate: list
    price_cols: tuple[int, ...] = ()
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.grid.n

    def _inputs(self, states: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.augment_payoff:
            return np.column_stack([states, g])
        return np.asarray(states, dtype=np.float64)

    def _prices(self, states: np.ndarray) -> np.ndarray:
        return states[:, list(self.price_cols)]

    def soft_values(self, n: int, states: np.ndarray, g: np.ndarray | None = None) -> np.ndarray:
        """Smoothed exercise output F_n in (0, 1) at full-state rows."""
        if n <= 0 or n >= self.n or self.nets[n] is None:
            raise ValueError(f"no trained network at date {n}")
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if g is None:
            g = payoff(self.contract, self._prices(states))
        x = self.scalers[n].apply(self._inputs(states, g))
        return nn.forward(self.spec, self.nets[n], x)[:, 0]

    def decide(self, n: int, states: np.ndarray, _memo: dict | None = None) -> np.ndarray:
        """Hard decisions f_n at full-state rows, after filter-mode masking."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        m = states.shape[0]
        if n >= self.n:
            return np.ones(m, dtype=bool)
        if n <= 0:
            return np.zeros(m, dtype=bool)
        if _memo is not None and n in _memo:
            return _memo[n]
        if self.degenerate[n]:
            out = np.zeros(m, dtype=bool)
        else:
            g = payoff(self.contract, self._prices(states))
            raw = self.soft_values(n, states, g) >= 0.5
            if self.filter_mode == "A2":
                out = raw & (g > 0.0)
            elif self.filter_mode == "A3":
                out = raw & self.decide(n + 1, states, _memo)
            else:
                out = raw
        if _memo is not None:
            _memo[n] = out
        return out

    def decide_all(self, paths: PathSet) -> np.ndarray:
        """Decision matrix f_n(x_{t_n}) over a PathSet, shape (M, N+1) bool."""
        m = paths.m
        out = np.zeros((m, self.n + 1), dtype=bool)
        out[:, self.n] = True
        for n in range(1, self.n):
            out[:, n] = self.decide(n, paths.states_at(n), _memo={})
        return out


def first_hit_indices(decisions: np.ndarray) -> np.ndarray:
    """First date with a positive decision per path (exists: last column is 1)."""
    return np.argmax(decisions, axis=1)


def stopping_index_from(decisions: np.ndarray, from_n: int) -> np.ndarray:
    """tau_n as a date index: first positive decision at or after ``from_n``."""
    return from_n + np.argmax(decisions[:, from_n:], axis=1)


def stopping_index_sum_product(decisions: np.ndarray, from_n: int) -> np.ndarray:
    """Stopping index by the sum-product composition of binary decisions.

    Equivalent to the first-hit scan; kept as an independent formulation for
    verification.  ``decisions[:, -1]`` must be identically 1.
    """
    d = decisions.astype(np.float64)
    m, n_dates = d.shape
    out = np.zeros(m)
    carry = np.ones(m)
    for k in range(from_n, n_dates):
        out += k * d[:, k] * carry
        carry = carry * (1.0 - d[:, k])
    return out.astype(np.int64)


def stopping_time(policy: DecisionPolicy, states: np.ndarray, from_n: int = 0) -> int:
    """Exercise date index chosen by the policy along one path.

    ``states`` holds the full state at every exercise date, shape
    (N+1, state_dim); the result is the first date >= from_n whose decision
    fires (maturity at the latest).
    """
    states = np.asarray(states, dtype=np.float64)
    for n in range(from_n, policy.n):
        if policy.decide(n, states[n : n + 1])[0]:
            return n
    return policy.n


@dataclass(frozen=True)
class CashflowMatrix:
    """Stopping indices and discounted cashflows per path and date.

    ``cf[:, n]`` is the cashflow of stopping no earlier than t_n, discounted
    to t_n; it satisfies cf_n = f_n * g_n + (1 - f_n) * disc * cf_{n+1}
    exactly, by construction.
    """

    tau_idx: np.ndarray
    cf: np.ndarray
    decisions: np.ndarray
    r: float


def replay(policy: DecisionPolicy, paths: PathSet) -> CashflowMatrix:
    """Apply a trained policy to a PathSet and build its cashflow matrix."""
    decisions = policy.decide_all(paths)
    n = policy.n
    m = paths.m
    g_all = np.column_stack(
        [payoff(policy.contract, paths.prices(k)) for k in range(n + 1)]
    )
    tau_idx = np.empty((m, n + 1), dtype=np.int64)
    cf = np.empty((m, n + 1))
    tau_idx[:, n] = n
    cf[:, n] = g_all[:, n]
    for k in range(n - 1, -1, -1):
        disc = math.exp(-policy.r * (paths.grid.exercise_dates[k + 1] - paths.grid.exercise_dates[k]))
        fire = decisions[:, k]
        tau_idx[:, k] = np.where(fire, k, tau_idx[:, k + 1])
        cf[:, k] = np.where(fire, g_all[:, k], disc * cf[:, k + 1])
    return CashflowMatrix(tau_idx, cf, decisions, policy.r)


def train_policy(
    paths: PathSet,
    contract: Contract,
    cfg: TrainConfig,
    r: float,
    hidden: tuple[int, ...] | None = None,
    hidden_activation: str = "relu",
) -> DecisionPolicy:
    """Backward pass over exercise dates, training one decision net per date.

    The cashflow vector starts at the maturity payoff and after each date's
    training is rolled back with that date's hard decisions, exactly the
    sequence the smoothed loss was optimized against.
    """
    grid = paths.grid
    n = grid.n
    m = paths.m
    if m < 1:
        raise ValueError("empty training PathSet")
    state_dim = paths.state_dim
    if hidden is None:
        hidden = (state_dim + 50, state_dim + 50)
    input_dim = state_dim + (1 if cfg.augment_payoff else 0)
    spec = nn.NetSpec(input_dim, tuple(hidden), hidden_activation, "sigmoid")

    g_all = np.column_stack([payoff(contract, paths.prices(k)) for k in range(n + 1)])

    policy = DecisionPolicy(
        grid=grid,
        contract=contract,
        r=r,
        filter_mode=cfg.filter_mode,
        augment_payoff=cfg.augment_payoff,
        spec=spec,
        nets=[None] * (n + 1),
        scalers=[None] * (n + 1),
        degenerate=[False] * (n + 1),
        price_cols=tuple(paths.price_cols),
    )

    cf = g_all[:, n].copy()
    prev_params = None
    for k in range(n - 1, 0, -1):
        states_k = paths.states_at(k)
        g_k = g_all[:, k]
        disc = math.exp(-r * (grid.exercise_dates[k + 1] - grid.exercise_dates[k]))
        y = disc * cf

        if cfg.filter_mode == "A2":
            subset = g_k > 0.0
        elif cfg.filter_mode == "A3":
            subset = policy.decide(k + 1, states_k, _memo={})
        else:
            subset = np.ones(m, dtype=bool)

        if not subset.any():
            policy.degenerate[k] = True
            policy.warnings.append(
                f"date {k}: empty training subset under {cfg.filter_mode}; "
                "decision degenerates to never exercise"
            )
            continue

        x_sub = np.column_stack([states_k, g_k]) if cfg.augment_payoff else states_k
        x_sub = x_sub[subset]
        scaler = nn.InputScaler.fit(x_sub)
        g_sub = g_k[subset]
        y_sub = y[subset]

        warm = cfg.warm_start and prev_params is not None
        if warm:
            params = prev_params.copy()
            steps, lr = cfg.steps_warm, cfg.lr_warm
        else:
            init_spec = nn.NetSpec(
                input_dim, tuple(hidden), hidden_activation, "sigmoid",
                init_seed=derive_seed(cfg.seed, "init", k),
            )
            params = nn.init_params(init_spec)
            steps, lr = cfg.steps_fresh, cfg.lr_fresh

        advantage = g_sub - y_sub

        def upstream(out, idx, adv=advantage):
            b = idx.shape[0]
            return (-adv[idx] / b).reshape(b, 1)

        params = nn.train_net(
            spec,
            params,
            scaler.apply(x_sub),
            upstream,
            steps=steps,
            batch_size=cfg.batch_size,
            lr=lr,
            shuffle_seed=derive_seed(cfg.seed, "shuffle", k),
        )
        policy.nets[k] = params
        policy.scalers[k] = scaler
        prev_params = params

        fire = policy.decide(k, states_k, _memo={})
        cf = np.where(fire, g_k, y)
    return policy


def price_lower_bound(policy: DecisionPolicy, paths: PathSet) -> tuple[float, float]:
    """Mean discounted payoff under the learned stopping rule, with its
    Monte-Carlo standard error.  Valuation paths must be independent of the
    training paths; the estimate is biased low by construction."""
    decisions = policy.decide_all(paths)
    j = first_hit_indices(decisions)
    times = paths.grid.exercise_dates
    g_all = np.column_stack(
        [payoff(policy.contract, paths.prices(k)) for k in range(policy.n + 1)]
    )
    rows = np.arange(paths.m)
    values = np.exp(-policy.r * (times[j] - times[0])) * g_all[rows, j]
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(paths.m))


def exercise_fraction(policy: DecisionPolicy, paths: PathSet) -> np.ndarray:
    """Fraction of paths stopped at each exercise date; sums to one."""
    j = first_hit_indices(policy.decide_all(paths))
    return np.bincount(j, minlength=policy.n + 1) / paths.m


# -- policy bundle -----------------------------------------------------------


def save_policy(policy: DecisionPolicy, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "filter_mode": policy.filter_mode,
        "augment_payoff": policy.augment_payoff,
        "r": policy.r,
        "contract": {
            "kind": policy.contract.kind,
            "strike": policy.contract.strike,
            "d": policy.contract.d,
        },
        "grid": {
            "exercise_dates": policy.grid.exercise_dates.tolist(),
            "substeps_per_interval": policy.grid.substeps_per_interval,
        },
        "net": {
            "input_dim": policy.spec.input_dim,
            "hidden": list(policy.spec.hidden),
            "hidden_activation": policy.spec.hidden_activation,
            "output_activation": policy.spec.output_activation,
        },
        "price_cols": list(policy.price_cols),
        "degenerate": [bool(x) for x in policy.degenerate],
        "warnings": policy.warnings,
        "scalers": {
            str(k): {"mean": policy.scalers[k].mean.tolist(), "scale": policy.scalers[k].scale.tolist()}
            for k in range(1, policy.n)
            if policy.scalers[k] is not None
        },
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    for k in range(1, policy.n):
        if policy.nets[k] is not None:
            nn.save_params(policy.nets[k], directory / f"net_{k:04d}.xnnp")


def load_policy(directory: str | Path) -> DecisionPolicy:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    grid = TimeGrid(
        np.asarray(manifest["grid"]["exercise_dates"]),
        manifest["grid"]["substeps_per_interval"],
    )
    contract = Contract(**manifest["contract"])
    spec = nn.NetSpec(
        manifest["net"]["input_dim"],
        tuple(manifest["net"]["hidden"]),
        manifest["net"]["hidden_activation"],
        manifest["net"]["output_activation"],
    )
    n = grid.n
    policy = DecisionPolicy(
        grid=grid,
        contract=contract,
        r=manifest["r"],
        filter_mode=manifest["filter_mode"],
        augment_payoff=manifest["augment_payoff"],
        spec=spec,
        nets=[None] * (n + 1),
        scalers=[None] * (n + 1),
        degenerate=[bool(x) for x in manifest["degenerate"]],
        price_cols=tuple(manifest["price_cols"]),
        warnings=list(manifest["warnings"]),
    )
    for k in range(1, n):
        path = directory / f"net_{k:04d}.xnnp"
        if path.exists():
            policy.nets[k] = nn.load_params(path)
            s = manifest["scalers"][str(k)]
            policy.scalers[k] = nn.InputScaler(np.asarray(s["mean"]), np.asarray(s["scale"]))
    return policy
