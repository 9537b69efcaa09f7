"""Pathwise option-value surfaces.

Discounted cashflows produced by a trained stopping policy are projected onto
the date-n state, restricted to the continuation region; inside the exercise
region the value is the immediate payoff.  Three projection families are
provided: global least squares on a basis, bundled local least squares, and a
network fitted by mean-squared error.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .dos import DecisionPolicy, replay
from .models import PathSet
from .payoffs import payoff
from .seeding import derive_seed


def laguerre(order: int, x: np.ndarray) -> np.ndarray:
    """Weighted Laguerre function exp(-x/2) * l_order(x).

    The polynomial part follows the stable three-term recurrence
    l_{k+1} = ((2k + 1 - x) l_k - k l_{k-1}) / (k + 1).
    """
    x = np.asarray(x, dtype=np.float64)
    prev = np.ones_like(x)
    if order == 0:
        poly = prev
    else:
        cur = 1.0 - x
        for k in range(1, order):
            prev, cur = cur, ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
        poly = cur
    return np.exp(-0.5 * x) * poly


@dataclass(frozen=True)
class BasisSet:
    """Ordered scalar feature functions on the full state vector."""

    name: str
    labels: tuple[str, ...]
    funcs: tuple

    @property
    def size(self) -> int:
        return len(self.funcs)

    def design_matrix(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        cols = [f(states) for f in self.funcs]
        return np.column_stack(cols)


def _max_log_price(price_cols):
    def f(states):
        return np.log(states[:, list(price_cols)]).max(axis=1)

    return f


def lsm_bs_basis(d: int, strike: float) -> BasisSet:
    """Constant, weighted Laguerre orders 0..5 of each price over strike, and
    powers 1..4 of the maximum log-price.  Prices are scaled by the strike so
    the exponential weight stays well inside the representable range."""
    labels = ["1"]
    funcs = [lambda s: np.ones(s.shape[0])]
    for i in range(d):
        for order in range(6):
            labels.append(f"lag{order}(s{i}/K)")
            funcs.append(lambda s, i=i, order=order: laguerre(order, s[:, i] / strike))
    for p in range(1, 5):
        labels.append(f"maxlog^{p}")
        funcs.append(lambda s, p=p: _max_log_price(range(d))(s) ** p)
    return BasisSet(f"lsm_bs[d={d}]", tuple(labels), tuple(funcs))


def sgbm_bs_basis(d: int, strike: float) -> BasisSet:
    """Constant, powers 1..4 of each scaled price, powers 1..2 of max log-price."""
    labels = ["1"]
    funcs = [lambda s: np.ones(s.shape[0])]
    for i in range(d):
        for p in range(1, 5):
            labels.append(f"(s{i}/K)^{p}")
            funcs.append(lambda s, i=i, p=p: (s[:, i] / strike) ** p)
    for p in range(1, 3):
        labels.append(f"maxlog^{p}")
        funcs.append(lambda s, p=p: _max_log_price(range(d))(s) ** p)
    return BasisSet(f"sgbm_bs[d={d}]", tuple(labels), tuple(funcs))


def lsm_heston_basis(strike: float) -> BasisSet:
    """State layout (variance, price): one constant, weighted Laguerre orders
    1..3 of the scaled price and of the variance, plus their product term."""
    labels = ["1"]
    funcs = [lambda s: np.ones(s.shape[0])]
    for order in range(1, 4):
        labels.append(f"lag{order}(s/K)")
        funcs.append(lambda s, order=order: laguerre(order, s[:, 1] / strike))
    for order in range(1, 4):
        labels.append(f"lag{order}(v)")
        funcs.append(lambda s, order=order: laguerre(order, s[:, 0]))
    labels.append("v*s/K")
    funcs.append(lambda s: s[:, 0] * s[:, 1] / strike)
    return BasisSet("lsm_heston", tuple(labels), tuple(funcs))


def sgbm_heston_basis(strike: float) -> BasisSet:
    """State layout (variance, price): constant, s/K, v*s/K and v, v^2, v^3."""
    labels = ["1", "s/K", "v*s/K", "v", "v^2", "v^3"]
    funcs = (
        lambda s: np.ones(s.shape[0]),
        lambda s: s[:, 1] / strike,
        lambda s: s[:, 0] * s[:, 1] / strike,
        lambda s: s[:, 0],
        lambda s: s[:, 0] ** 2,
        lambda s: s[:, 0] ** 3,
    )
    return BasisSet("sgbm_heston", tuple(labels), funcs)


def poly_basis(d: int, degree: int, strike: float, price_cols=None) -> BasisSet:
    """Constant, per-asset scaled powers up to ``degree`` and basket-average
    powers up to ``degree``; a generic well-conditioned default."""
    cols = list(price_cols) if price_cols is not None else list(range(d))
    labels = ["1"]
    funcs = [lambda s: np.ones(s.shape[0])]
    for i in cols:
        for p in range(1, degree + 1):
            labels.append(f"(s{i}/K)^{p}")
            funcs.append(lambda s, i=i, p=p: (s[:, i] / strike) ** p)
    for p in range(1, degree + 1):
        labels.append(f"mean^{p}")
        funcs.append(lambda s, p=p: (s[:, cols].mean(axis=1) / strike) ** p)
    return BasisSet(f"poly{degree}[d={d}]", tuple(labels), tuple(funcs))


BASIS_PRESETS = {
    "lsm_bs": lsm_bs_basis,
    "sgbm_bs": sgbm_bs_basis,
    "lsm_heston": lsm_heston_basis,
    "sgbm_heston": sgbm_heston_basis,
}


def ols_solve(design: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients via QR; minimum-norm SVD fallback when the
    design is numerically rank-deficient (with a warning)."""
    q, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    if diag.min() > 1e-10 * max(diag.max(), 1.0):
        # R is tiny (B x B); the generic solve on it is effectively the
        # back substitution
        return np.linalg.solve(r, q.T @ y)
    warnings.warn(
        "rank-deficient regression design; returning the minimum-norm solution",
        stacklevel=2,
    )
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


def fit_ols_global(x: np.ndarray, y: np.ndarray, basis: BasisSet) -> np.ndarray:
    """Global least-squares coefficients of y on the basis at states x."""
    if x.shape[0] < 1:
        raise ValueError("need at least one regression pair")
    return ols_solve(basis.design_matrix(x), np.asarray(y, dtype=np.float64))


@dataclass(frozen=True)
class LocalFit:
    """Per-bundle coefficients plus the sorted-statistic bundle edges.

    ``upper_edges[k]`` is the largest statistic value inside bundle k;
    queries equal to an edge route to the lower bundle.
    """

    upper_edges: np.ndarray
    coefs: np.ndarray  # (n_bundles, B)

    def bundle_of(self, stat: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.upper_edges[:-1], stat, side="left")
        return idx


def bundle_split(stat: np.ndarray, n_bundles: int) -> list[np.ndarray]:
    """Index blocks of equal size by sorted statistic, ties broken by path index.

    Each block is returned in original path order so a one-bundle split feeds
    the solver the exact same design matrix as a global fit.
    """
    order = np.argsort(stat, kind="stable")
    return [np.sort(chunk) for chunk in np.array_split(order, n_bundles)]


def fit_ols_local(
    x: np.ndarray,
    y: np.ndarray,
    basis: BasisSet,
    n_bundles: int,
    bundle_stat,
) -> LocalFit:
    """Independent least squares inside equally-sized bundles.

    ``bundle_stat`` maps full-state rows to the scalar bundling statistic.
    Bundles smaller than the basis size fall back to the minimum-norm
    solution (with the rank-deficiency warning from the solver).
    """
    y = np.asarray(y, dtype=np.float64)
    stat = bundle_stat(x)
    blocks = bundle_split(stat, n_bundles)
    design = basis.design_matrix(x)
    coefs = np.empty((n_bundles, basis.size))
    edges = np.empty(n_bundles)
    for k, block in enumerate(blocks):
        if block.size == 0:
            raise ValueError("more bundles than samples")
        if block.size < basis.size:
            warnings.warn(
                f"bundle {k} holds {block.size} samples for {basis.size} basis functions",
                stacklevel=2,
            )
        coefs[k] = ols_solve(design[block], y[block])
        edges[k] = stat[block].max()
    return LocalFit(edges, coefs)


@dataclass(frozen=True)
class RegressionTrainConfig:
    steps: int = 2000
    batch_size: int = 8192
    lr: float = 1e-3
    hidden: tuple[int, ...] | None = None
    seed: int = 0


@dataclass(frozen=True)
class NnFit:
    scaler: nn.InputScaler
    spec: nn.NetSpec
    params: nn.NetParams
    y_center: float
    y_scale: float


def fit_nn(
    x: np.ndarray,
    y: np.ndarray,
    cfg: RegressionTrainConfig,
    output_mode: str = "identity",
    g: np.ndarray | None = None,
) -> NnFit:
    """Mean-squared-error network fit of values y at states x.

    ``identity`` output fits y directly.  ``payoff_shift_relu`` fits the
    premium y - g with a nonnegative (ReLU) output so the reconstructed value
    g + premium dominates the payoff everywhere by construction.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if output_mode not in ("identity", "payoff_shift_relu"):
        raise ValueError(f"unknown output mode {output_mode!r}")
    if output_mode == "payoff_shift_relu":
        if g is None:
            raise ValueError("payoff values g are required for the shifted mode")
        target = y - g
        center = 0.0
        out_act = "relu"
    else:
        target = y
        center = float(target.mean())
        out_act = "identity"
    scale = float(target.std())
    if scale < 1e-12:
        scale = 1.0
    target_s = (target - center) / scale

    hidden = cfg.hidden or (x.shape[1] + 50, x.shape[1] + 50)
    spec = nn.NetSpec(
        x.shape[1], tuple(hidden), "relu", out_act, init_seed=derive_seed(cfg.seed, "init")
    )
    params = nn.init_params(spec)
    scaler = nn.InputScaler.fit(x)

    def upstream(out, idx):
        b = idx.shape[0]
        return (2.0 * (out[:, 0] - target_s[idx]) / b).reshape(b, 1)

    params = nn.train_net(
        spec,
        params,
        scaler.apply(x),
        upstream,
        steps=cfg.steps,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        shuffle_seed=derive_seed(cfg.seed, "shuffle"),
    )
    return NnFit(scaler, spec, params, center, scale)


@dataclass
class ValueSurface:
    """Fitted pathwise value approximator with the exercise-region override.

    evaluate(n, x) returns the payoff wherever the policy exercises (and at
    maturity), the date-0 constant at n = 0, and the fitted regression value
    elsewhere.  Dates whose continuation region was empty fall back to the
    payoff (``all-exercise``).
    """

    kind: str  # ols_global | ols_local | nn
    policy: DecisionPolicy
    basis: BasisSet | None
    fits: list
    t0_value: float
    output_mode: str = "identity"
    bundle_stat: object = None
    warnings: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.policy.n

    def _regression_values(self, n: int, states: np.ndarray) -> np.ndarray:
        fit = self.fits[n]
        if fit is None:
            raise ValueError(f"no fitted surface at date {n}")
        if fit == "all_exercise":
            return payoff(self.policy.contract, self.policy._prices(states))
        if self.kind == "ols_global":
            return self.basis.design_matrix(states) @ fit
        if self.kind == "ols_local":
            stat = self.bundle_stat(states)
            idx = fit.bundle_of(stat)
            design = self.basis.design_matrix(states)
            return np.einsum("mb,mb->m", design, fit.coefs[idx])
        out = nn.forward(fit.spec, fit.params, fit.scaler.apply(states))[:, 0]
        values = out * fit.y_scale + fit.y_center
        if self.output_mode == "payoff_shift_relu":
            values = values + payoff(self.policy.contract, self.policy._prices(states))
        return values

    def evaluate(self, n: int, states) -> np.ndarray | float:
        scalar = np.asarray(states).ndim <= 1
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if n >= self.n:
            out = payoff(self.policy.contract, self.policy._prices(states))
            out = np.atleast_1d(out)
        elif n == 0:
            out = np.full(states.shape[0], self.t0_value)
        else:
            g = payoff(self.policy.contract, self.policy._prices(states))
            exercised = self.policy.decide(n, states, _memo={})
            out = np.where(exercised, g, 0.0)
            cont = ~exercised
            if cont.any():
                out[cont] = self._regression_values(n, states[cont])
        return float(out[0]) if scalar else out


def max_price_stat(price_cols):
    def f(states):
        return states[:, list(price_cols)].max(axis=1)

    return f


def fit_surface(
    policy: DecisionPolicy,
    paths: PathSet,
    method: str,
    basis: BasisSet | None = None,
    n_bundles: int = 32,
    bundle_stat=None,
    nn_cfg: RegressionTrainConfig | None = None,
    output_mode: str = "identity",
) -> ValueSurface:
    """Fit a value surface at every date from one regression PathSet.

    Regression pairs take only continuation-region samples under the trained
    policy; each date's fit reads only that date's states and cashflows, so
    the per-date fits are order-independent.
    """
    if method not in ("ols_global", "ols_local", "nn"):
        raise ValueError(f"unknown regression method {method!r}")
    if method in ("ols_global", "ols_local") and basis is None:
        raise ValueError("OLS regression needs a basis")
    if method == "ols_local" and bundle_stat is None:
        bundle_stat = max_price_stat(paths.price_cols)
    cm = replay(policy, paths)
    n = policy.n
    fits: list = [None] * (n + 1)
    surface = ValueSurface(
        kind=method,
        policy=policy,
        basis=basis,
        fits=fits,
        t0_value=float(cm.cf[:, 0].mean()),
        output_mode=output_mode,
        bundle_stat=bundle_stat,
    )
    for k in range(1, n):
        cont = ~cm.decisions[:, k]
        m_c = int(cont.sum())
        if m_c == 0:
            fits[k] = "all_exercise"
            surface.warnings.append(f"date {k}: empty continuation region, value = payoff")
            continue
        x = paths.states_at(k)[cont]
        y = cm.cf[cont, k]
        if method == "ols_global":
            fits[k] = fit_ols_global(x, y, basis)
        elif method == "ols_local":
            fits[k] = fit_ols_local(x, y, basis, n_bundles, bundle_stat)
        else:
            cfg = nn_cfg or RegressionTrainConfig()
            cfg = RegressionTrainConfig(
                cfg.steps, cfg.batch_size, cfg.lr, cfg.hidden, derive_seed(cfg.seed, "date", k)
            )
            g = payoff(policy.contract, policy._prices(x)) if output_mode == "payoff_shift_relu" else None
            fits[k] = fit_nn(x, y, cfg, output_mode=output_mode, g=g)
    return surface


def make_preset_basis(preset: str, d: int, strike: float) -> BasisSet:
    if preset not in BASIS_PRESETS:
        raise ValueError(f"unknown basis preset {preset!r}; have {sorted(BASIS_PRESETS)}")
    factory = BASIS_PRESETS[preset]
    if preset in ("lsm_heston", "sgbm_heston"):
        return factory(strike)
    return factory(d, strike)


def save_surface(surface: ValueSurface, directory: str | Path, basis_ref: dict | None = None) -> None:
    """Surface bundle: manifest plus per-date coefficient/NN files.

    ``basis_ref`` records how to rebuild a preset basis ({preset, d, strike});
    surfaces over custom bases require the basis at load time.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    per_date = {}
    arrays = {}
    for k in range(1, surface.n):
        fit = surface.fits[k]
        if fit is None:
            continue
        if fit == "all_exercise":
            per_date[str(k)] = {"type": "all_exercise"}
        elif surface.kind == "ols_global":
            per_date[str(k)] = {"type": "ols_global"}
            arrays[f"coef_{k}"] = fit
        elif surface.kind == "ols_local":
            per_date[str(k)] = {"type": "ols_local"}
            arrays[f"coef_{k}"] = fit.coefs
            arrays[f"edges_{k}"] = fit.upper_edges
        else:
            nn.save_params(fit.params, directory / f"net_{k:04d}.xnnp")
            per_date[str(k)] = {
                "type": "nn",
                "hidden": list(fit.spec.hidden),
                "y_center": fit.y_center,
                "y_scale": fit.y_scale,
                "scaler_mean": fit.scaler.mean.tolist(),
                "scaler_scale": fit.scaler.scale.tolist(),
            }
    manifest = {
        "version": 1,
        "kind": surface.kind,
        "output_mode": surface.output_mode,
        "t0_value": surface.t0_value,
        "basis": basis_ref,
        "bundle_stat": "max_price" if surface.bundle_stat is not None else None,
        "dates": per_date,
        "warnings": surface.warnings,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    if arrays:
        np.savez(directory / "coefficients.npz", **arrays)


def load_surface(
    directory: str | Path, policy: DecisionPolicy, basis: BasisSet | None = None
) -> ValueSurface:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if basis is None and manifest["basis"] is not None:
        ref = manifest["basis"]
        basis = make_preset_basis(ref["preset"], ref["d"], ref["strike"])
    arrays = {}
    coef_file = directory / "coefficients.npz"
    if coef_file.exists():
        arrays = dict(np.load(coef_file))
    fits: list = [None] * (policy.n + 1)
    for key, info in manifest["dates"].items():
        k = int(key)
        if info["type"] == "all_exercise":
            fits[k] = "all_exercise"
        elif info["type"] == "ols_global":
            fits[k] = arrays[f"coef_{k}"]
        elif info["type"] == "ols_local":
            fits[k] = LocalFit(arrays[f"edges_{k}"], arrays[f"coef_{k}"])
        else:
            params = nn.load_params(directory / f"net_{k:04d}.xnnp")
            spec = nn.NetSpec(
                params.weights[0].shape[0], tuple(info["hidden"]), "relu",
                "relu" if manifest["output_mode"] == "payoff_shift_relu" else "identity",
            )
            fits[k] = NnFit(
                nn.InputScaler(np.asarray(info["scaler_mean"]), np.asarray(info["scaler_scale"])),
                spec,
                params,
                info["y_center"],
                info["y_scale"],
            )
    stat = max_price_stat(policy.price_cols) if manifest["bundle_stat"] == "max_price" else None
    return ValueSurface(
        kind=manifest["kind"],
        policy=policy,
        basis=basis,
        fits=fits,
        t0_value=manifest["t0_value"],
        output_mode=manifest["output_mode"],
        bundle_stat=stat,
        warnings=list(manifest["warnings"]),
    )
