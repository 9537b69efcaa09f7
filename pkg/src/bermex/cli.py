"""Batch front-end: parse an experiment config, run the
simulate -> train -> regress -> estimate pipeline, and emit CSV tables and
plot-ready grids.

Config files are INI-style text with explicit section headers; see the
bundled presets under ``bermex/configs``.  Exit codes: 0 success, 2 config
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import json
import sys
import time
from configparser import ConfigParser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import dos, exposure, regression
from .models import GbmModel, HestonModel, TimeGrid
from .payoffs import Contract, payoff
from .seeding import derive_seed
from .simulate import simulate_gbm, simulate_heston, simulate_switched


class ConfigError(Exception):
    """Raised with a section/field-precise message for invalid configs."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# -- config schema -----------------------------------------------------------


@dataclass(frozen=True)
class ModelSection:
    kind: str  # gbm | heston
    d: int
    s0: tuple
    r: float
    q: tuple
    sigma: tuple = ()
    rho: tuple = ()  # tuple of row tuples
    mu_p: tuple | None = None
    nu0: float | None = None
    kappa: float | None = None
    theta: float | None = None
    xi: float | None = None
    rho_nu_s: float | None = None


@dataclass(frozen=True)
class ContractSection:
    kind: str
    strike: float


@dataclass(frozen=True)
class GridSection:
    t0: float
    t_end: float
    n_exercise: int
    substeps: int


@dataclass(frozen=True)
class TrainingSection:
    m_train: int = 2**20
    m_val: int = 2**20
    batch: int = 8192
    steps_fresh: int = 3000
    steps_warm: int = 600
    lr_fresh: float = 1e-3
    lr_warm: float = 1e-4
    filter_mode: str = "A2"
    augment_payoff: bool = True
    warm_start: bool = True
    hidden: tuple | None = None


@dataclass(frozen=True)
class RegressionSection:
    method: str = "nn"  # nn | ols_global | ols_local | none
    preset: str | None = None
    n_bundles: int = 32
    m_reg: int = 2**20
    steps: int = 2000
    batch: int = 8192
    lr: float = 1e-3
    output_mode: str = "identity"


@dataclass(frozen=True)
class ExposureSection:
    estimators: tuple = ()
    alphas: tuple = (0.025, 0.975)
    m_exposure: int = 2**20


@dataclass(frozen=True)
class BaselineSection:
    methods: tuple = ()
    lsm_preset: str | None = None
    sgbm_preset: str | None = None
    lsm_itm_only: bool = True
    n_bundles: int = 32
    m_paths: int = 2**20


@dataclass(frozen=True)
class BoundarySection:
    dates: tuple = ()
    lo: float = 0.0
    hi: float = 0.0
    points: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSection
    contract: ContractSection
    grid: GridSection
    training: TrainingSection
    regression: RegressionSection
    exposure: ExposureSection | None
    baselines: BaselineSection
    boundary: BoundarySection | None
    output_dir: str
    master_seed: int

    def build_model(self):
        m = self.model
        if m.kind == "gbm":
            return GbmModel(m.d, np.array(m.s0), m.r, np.array(m.q), np.array(m.sigma),
                            np.array(m.rho), None if m.mu_p is None else np.array(m.mu_p))
        return HestonModel(m.s0[0], m.nu0, m.r, m.q[0], m.kappa, m.theta, m.xi, m.rho_nu_s)

    def build_grid(self) -> TimeGrid:
        g = self.grid
        return TimeGrid.equidistant(g.t0, g.t_end, g.n_exercise, g.substeps)

    def build_contract(self) -> Contract:
        return Contract(self.contract.kind, self.contract.strike, self.model.d)


def _parse_floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _parse_bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {text!r}")


_REQUIRED = object()


def _get(parser: ConfigParser, section: str, key: str, cast, default=_REQUIRED):
    if not parser.has_option(section, key):
        if default is _REQUIRED:
            raise ConfigError(f"[{section}] {key}: required field is missing")
        return default
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from exc


def _parse_rho(text: str, d: int) -> tuple:
    text = text.strip()
    if ";" in text:
        rows = [_parse_floats(r) for r in text.split(";")]
    else:
        vals = _parse_floats(text)
        if len(vals) == 1:
            off = vals[0]
            rows = [[off] * d for _ in range(d)]
            for i in range(d):
                rows[i][i] = 1.0
        else:
            raise ValueError("rho must be a scalar off-diagonal value or ';'-separated rows")
    if len(rows) != d or any(len(r) != d for r in rows):
        raise ValueError(f"rho must be {d}x{d}")
    return tuple(tuple(r) for r in rows)


def parse_config(text: str) -> ExperimentConfig:
    parser = ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except Exception as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    for section in parser.sections():
        if section not in (
            "model", "contract", "grid", "training", "regression",
            "exposure", "baselines", "boundary", "output", "run",
        ):
            raise ConfigError(f"unknown section [{section}]")

    if not parser.has_section("model"):
        raise ConfigError("missing required section [model]")
    kind = _get(parser, "model", "kind", str).strip().lower()
    if kind not in ("gbm", "heston"):
        raise ConfigError(f"[model] kind: expected gbm or heston, got {kind!r}")
    if kind == "gbm":
        d = _get(parser, "model", "d", int)
        s0 = _get(parser, "model", "s0", _parse_floats)
        if len(s0) == 1 and d > 1:
            s0 = s0 * d
        q = _get(parser, "model", "q", _parse_floats, (0.0,))
        if len(q) == 1 and d > 1:
            q = q * d
        sigma = _get(parser, "model", "sigma", _parse_floats)
        if len(sigma) == 1 and d > 1:
            sigma = sigma * d
        rho = _get(parser, "model", "rho", lambda t: _parse_rho(t, d), _parse_rho("0", d))
        mu_p = _get(parser, "model", "mu_p", _parse_floats, None)
        if mu_p is not None and len(mu_p) == 1 and d > 1:
            mu_p = mu_p * d
        model = ModelSection(
            kind="gbm", d=d, s0=s0, r=_get(parser, "model", "r", float), q=q,
            sigma=sigma, rho=rho, mu_p=mu_p,
        )
    else:
        model = ModelSection(
            kind="heston",
            d=1,
            s0=(_get(parser, "model", "s0", float),),
            r=_get(parser, "model", "r", float),
            q=(_get(parser, "model", "q", float, 0.0),),
            nu0=_get(parser, "model", "nu0", float),
            kappa=_get(parser, "model", "kappa", float),
            theta=_get(parser, "model", "theta", float),
            xi=_get(parser, "model", "xi", float),
            rho_nu_s=_get(parser, "model", "rho_nu_s", float),
        )

    contract = ContractSection(
        kind=_get(parser, "contract", "kind", str).strip(),
        strike=_get(parser, "contract", "strike", float),
    )
    grid = GridSection(
        t0=_get(parser, "grid", "t0", float, 0.0),
        t_end=_get(parser, "grid", "t_end", float),
        n_exercise=_get(parser, "grid", "n_exercise", int),
        substeps=_get(parser, "grid", "substeps", int, 1),
    )

    def _hidden(text):
        vals = tuple(int(x) for x in text.replace(",", " ").split())
        return vals or None

    training = TrainingSection(
        m_train=_get(parser, "training", "m_train", int, 2**20),
        m_val=_get(parser, "training", "m_val", int, 2**20),
        batch=_get(parser, "training", "batch", int, 8192),
        steps_fresh=_get(parser, "training", "steps_fresh", int, 3000),
        steps_warm=_get(parser, "training", "steps_warm", int, 600),
        lr_fresh=_get(parser, "training", "lr_fresh", float, 1e-3),
        lr_warm=_get(parser, "training", "lr_warm", float, 1e-4),
        filter_mode=_get(parser, "training", "filter", str, "A2").strip(),
        augment_payoff=_get(parser, "training", "augment_payoff",
                            lambda t: _parse_bool(t, "[training] augment_payoff"), True),
        warm_start=_get(parser, "training", "warm_start",
                        lambda t: _parse_bool(t, "[training] warm_start"), True),
        hidden=_get(parser, "training", "hidden", _hidden, None),
    )
    if training.filter_mode not in dos.FILTER_MODES:
        raise ConfigError(f"[training] filter: must be one of {dos.FILTER_MODES}")

    regression_sec = RegressionSection(
        method=_get(parser, "regression", "method", str, "nn").strip(),
        preset=_get(parser, "regression", "preset", str, None),
        n_bundles=_get(parser, "regression", "n_bundles", int, 32),
        m_reg=_get(parser, "regression", "m_reg", int, 2**20),
        steps=_get(parser, "regression", "steps", int, 2000),
        batch=_get(parser, "regression", "batch", int, 8192),
        lr=_get(parser, "regression", "lr", float, 1e-3),
        output_mode=_get(parser, "regression", "output_mode", str, "identity").strip(),
    )
    if regression_sec.method not in ("nn", "ols_global", "ols_local", "none"):
        raise ConfigError("[regression] method: must be nn, ols_global, ols_local or none")

    exposure_sec = None
    if parser.has_section("exposure"):
        alphas = _get(parser, "exposure", "alphas", _parse_floats, (0.025, 0.975))
        for a in alphas:
            if not 0.0 < a < 1.0:
                raise ConfigError(f"[exposure] alphas: {a} outside (0, 1)")
        estimators = tuple(
            e.strip()
            for e in _get(parser, "exposure", "estimators", str, "EE1_Q, EE2_Q, PFE_Q").split(",")
            if e.strip()
        )
        known = set(exposure.EE_ESTIMATORS) | {"PFE_Q", "PFE_P"}
        for e in estimators:
            if e not in known:
                raise ConfigError(f"[exposure] estimators: unknown estimator {e!r}")
        exposure_sec = ExposureSection(
            estimators=estimators,
            alphas=alphas,
            m_exposure=_get(parser, "exposure", "m_exposure", int, 2**20),
        )

    baselines_sec = BaselineSection()
    if parser.has_section("baselines"):
        methods = tuple(
            m.strip().lower()
            for m in _get(parser, "baselines", "methods", str, "").split(",")
            if m.strip()
        )
        for m in methods:
            if m not in ("lsm", "sgbm"):
                raise ConfigError(f"[baselines] methods: unknown baseline {m!r}")
        baselines_sec = BaselineSection(
            methods=methods,
            lsm_preset=_get(parser, "baselines", "lsm_preset", str, None),
            sgbm_preset=_get(parser, "baselines", "sgbm_preset", str, None),
            lsm_itm_only=_get(parser, "baselines", "lsm_itm_only",
                              lambda t: _parse_bool(t, "[baselines] lsm_itm_only"), True),
            n_bundles=_get(parser, "baselines", "n_bundles", int, 32),
            m_paths=_get(parser, "baselines", "m_paths", int, 2**20),
        )

    boundary_sec = None
    if parser.has_section("boundary"):
        boundary_sec = BoundarySection(
            dates=tuple(int(x) for x in _get(parser, "boundary", "dates", str).replace(",", " ").split()),
            lo=_get(parser, "boundary", "lo", float),
            hi=_get(parser, "boundary", "hi", float),
            points=_get(parser, "boundary", "points", int),
        )

    cfg = ExperimentConfig(
        model=model,
        contract=contract,
        grid=grid,
        training=training,
        regression=regression_sec,
        exposure=exposure_sec,
        baselines=baselines_sec,
        boundary=boundary_sec,
        output_dir=_get(parser, "output", "dir", str, "out"),
        master_seed=_get(parser, "run", "master_seed", int, 1),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.contract.kind not in ("max_call", "put", "arithmetic_basket_put",
                                 "arithmetic_basket_call", "geometric_basket_call"):
        raise ConfigError(f"[contract] kind: unknown contract {cfg.contract.kind!r}")
    if cfg.grid.n_exercise < 1:
        raise ConfigError("[grid] n_exercise: need at least one exercise interval")
    if cfg.regression.method in ("ols_global", "ols_local") and cfg.regression.preset is None:
        raise ConfigError("[regression] preset: OLS regression needs a basis preset")
    needs_p = cfg.exposure is not None and any(
        e.endswith("_P") for e in cfg.exposure.estimators
    )
    if needs_p and cfg.model.kind == "gbm" and cfg.model.mu_p is None:
        raise ConfigError("[model] mu_p: real-world estimators need the real-world drift")
    if needs_p and cfg.model.kind == "heston":
        raise ConfigError("[exposure] estimators: real-world estimators are "
                          "not available under the heston model")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse(serialize(parse(text))) == parse(text)."""
    lines = ["[model]", f"kind = {cfg.model.kind}"]
    m = cfg.model
    if m.kind == "gbm":
        lines += [
            f"d = {m.d}",
            "s0 = " + " ".join(_fmt(x) for x in m.s0),
            f"r = {_fmt(m.r)}",
            "q = " + " ".join(_fmt(x) for x in m.q),
            "sigma = " + " ".join(_fmt(x) for x in m.sigma),
            "rho = " + " ; ".join(" ".join(_fmt(v) for v in row) for row in m.rho),
        ]
        if m.mu_p is not None:
            lines.append("mu_p = " + " ".join(_fmt(x) for x in m.mu_p))
    else:
        lines += [
            f"s0 = {_fmt(m.s0[0])}",
            f"r = {_fmt(m.r)}",
            f"q = {_fmt(m.q[0])}",
            f"nu0 = {_fmt(m.nu0)}",
            f"kappa = {_fmt(m.kappa)}",
            f"theta = {_fmt(m.theta)}",
            f"xi = {_fmt(m.xi)}",
            f"rho_nu_s = {_fmt(m.rho_nu_s)}",
        ]
    lines += [
        "",
        "[contract]",
        f"kind = {cfg.contract.kind}",
        f"strike = {_fmt(cfg.contract.strike)}",
        "",
        "[grid]",
        f"t0 = {_fmt(cfg.grid.t0)}",
        f"t_end = {_fmt(cfg.grid.t_end)}",
        f"n_exercise = {cfg.grid.n_exercise}",
        f"substeps = {cfg.grid.substeps}",
        "",
        "[training]",
        f"m_train = {cfg.training.m_train}",
        f"m_val = {cfg.training.m_val}",
        f"batch = {cfg.training.batch}",
        f"steps_fresh = {cfg.training.steps_fresh}",
        f"steps_warm = {cfg.training.steps_warm}",
        f"lr_fresh = {_fmt(cfg.training.lr_fresh)}",
        f"lr_warm = {_fmt(cfg.training.lr_warm)}",
        f"filter = {cfg.training.filter_mode}",
        f"augment_payoff = {str(cfg.training.augment_payoff).lower()}",
        f"warm_start = {str(cfg.training.warm_start).lower()}",
    ]
    if cfg.training.hidden:
        lines.append("hidden = " + " ".join(str(h) for h in cfg.training.hidden))
    lines += [
        "",
        "[regression]",
        f"method = {cfg.regression.method}",
    ]
    if cfg.regression.preset:
        lines.append(f"preset = {cfg.regression.preset}")
    lines += [
        f"n_bundles = {cfg.regression.n_bundles}",
        f"m_reg = {cfg.regression.m_reg}",
        f"steps = {cfg.regression.steps}",
        f"batch = {cfg.regression.batch}",
        f"lr = {_fmt(cfg.regression.lr)}",
        f"output_mode = {cfg.regression.output_mode}",
    ]
    if cfg.exposure is not None:
        lines += [
            "",
            "[exposure]",
            "estimators = " + ", ".join(cfg.exposure.estimators),
            "alphas = " + " ".join(_fmt(a) for a in cfg.exposure.alphas),
            f"m_exposure = {cfg.exposure.m_exposure}",
        ]
    if cfg.baselines.methods:
        b = cfg.baselines
        lines += ["", "[baselines]", "methods = " + ", ".join(b.methods)]
        if b.lsm_preset:
            lines.append(f"lsm_preset = {b.lsm_preset}")
        if b.sgbm_preset:
            lines.append(f"sgbm_preset = {b.sgbm_preset}")
        lines += [
            f"lsm_itm_only = {str(b.lsm_itm_only).lower()}",
            f"n_bundles = {b.n_bundles}",
            f"m_paths = {b.m_paths}",
        ]
    if cfg.boundary is not None:
        lines += [
            "",
            "[boundary]",
            "dates = " + " ".join(str(d) for d in cfg.boundary.dates),
            f"lo = {_fmt(cfg.boundary.lo)}",
            f"hi = {_fmt(cfg.boundary.hi)}",
            f"points = {cfg.boundary.points}",
        ]
    lines += [
        "",
        "[output]",
        f"dir = {cfg.output_dir}",
        "",
        "[run]",
        f"master_seed = {cfg.master_seed}",
        "",
    ]
    return "\n".join(lines)


def load_config(path_or_name: str) -> ExperimentConfig:
    p = Path(path_or_name)
    if p.exists():
        return parse_config(p.read_text())
    bundled = importlib.resources.files("bermex") / "configs" / f"{path_or_name}.cfg"
    if bundled.is_file():
        return parse_config(bundled.read_text())
    raise ConfigError(f"config {path_or_name!r} is neither a file nor a bundled preset")


# -- pipeline ----------------------------------------------------------------


def _simulate(cfg: ExperimentConfig, m: int, seed: int, measure: str = "Q"):
    model = cfg.build_model()
    grid = cfg.build_grid()
    if cfg.model.kind == "gbm":
        return simulate_gbm(model, grid, m, measure, seed)
    if measure != "Q":
        raise ConfigError("heston paths are generated under the risk-neutral measure only")
    return simulate_heston(model, grid, m, seed)


def _basis_for(cfg: ExperimentConfig, preset: str) -> regression.BasisSet:
    return regression.make_preset_basis(preset, cfg.model.d, cfg.contract.strike)


@dataclass
class RunReport:
    prices: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    config_echo: str = ""


def run_pipeline(cfg: ExperimentConfig, out_dir: Path, price_only: bool = False) -> RunReport:
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(config_echo=serialize_config(cfg))
    seed = cfg.master_seed
    contract = cfg.build_contract()
    grid = cfg.build_grid()
    r = cfg.model.r

    t_start = time.perf_counter()
    train_paths = _simulate(cfg, cfg.training.m_train, derive_seed(seed, "train_paths"))
    report.timings["simulate_train"] = time.perf_counter() - t_start

    train_cfg = dos.TrainConfig(
        batch_size=cfg.training.batch,
        steps_fresh=cfg.training.steps_fresh,
        steps_warm=cfg.training.steps_warm,
        lr_fresh=cfg.training.lr_fresh,
        lr_warm=cfg.training.lr_warm,
        filter_mode=cfg.training.filter_mode,
        augment_payoff=cfg.training.augment_payoff,
        warm_start=cfg.training.warm_start,
        seed=derive_seed(seed, "training"),
    )
    t0 = time.perf_counter()
    policy = dos.train_policy(train_paths, contract, train_cfg, r, hidden=cfg.training.hidden)
    report.timings["train_policy"] = time.perf_counter() - t0
    report.warnings.extend(policy.warnings)
    del train_paths

    val_paths = _simulate(cfg, cfg.training.m_val, derive_seed(seed, "valuation_paths"))
    t0 = time.perf_counter()
    price, se = dos.price_lower_bound(policy, val_paths)
    report.timings["valuation"] = time.perf_counter() - t0
    report.prices.append(
        {"method": "dos", "price": price, "std_err": se, "m": cfg.training.m_val,
         "seed": val_paths.seed}
    )
    fractions = {"dos": dos.exercise_fraction(policy, val_paths)}
    dos.save_policy(policy, out_dir / "policy")
    report.artifacts.append("policy")

    baseline_models = {}
    if cfg.baselines.methods:
        b_paths = _simulate(cfg, cfg.baselines.m_paths, derive_seed(seed, "baseline_paths"))
        for method in cfg.baselines.methods:
            t0 = time.perf_counter()
            if method == "lsm":
                preset = cfg.baselines.lsm_preset or (
                    "lsm_heston" if cfg.model.kind == "heston" else "lsm_bs"
                )
                model = bl.lsm_fit(b_paths, contract, _basis_for(cfg, preset),
                                   cfg.baselines.lsm_itm_only, r)
            else:
                preset = cfg.baselines.sgbm_preset or (
                    "sgbm_heston" if cfg.model.kind == "heston" else "sgbm_bs"
                )
                stat = (lambda s: s[:, 1]) if cfg.model.kind == "heston" else None
                model = bl.sgbm_fit(b_paths, contract, _basis_for(cfg, preset),
                                    cfg.baselines.n_bundles, r, bundle_stat=stat)
            report.timings[f"baseline_{method}"] = time.perf_counter() - t0
            report.warnings.extend(model.warnings)
            report.prices.append(
                {"method": method, "price": model.price, "std_err": model.std_err,
                 "m": cfg.baselines.m_paths, "seed": b_paths.seed}
            )
            fractions[method] = dos.exercise_fraction(model, val_paths)
            baseline_models[method] = model
        del b_paths

    _write_prices(out_dir / "price_report.csv", report.prices)
    report.artifacts.append("price_report.csv")
    _write_fractions(out_dir / "exercise_fraction.csv", grid, fractions)
    report.artifacts.append("exercise_fraction.csv")

    if price_only or cfg.regression.method == "none":
        _write_report(out_dir, report)
        return report

    reg_paths = _simulate(cfg, cfg.regression.m_reg, derive_seed(seed, "regression_paths"))
    t0 = time.perf_counter()
    basis = None
    if cfg.regression.method in ("ols_global", "ols_local"):
        basis = _basis_for(cfg, cfg.regression.preset)
    nn_cfg = regression.RegressionTrainConfig(
        steps=cfg.regression.steps,
        batch_size=cfg.regression.batch,
        lr=cfg.regression.lr,
        hidden=cfg.training.hidden,
        seed=derive_seed(seed, "regression_net"),
    )
    surface = regression.fit_surface(
        policy,
        reg_paths,
        cfg.regression.method,
        basis=basis,
        n_bundles=cfg.regression.n_bundles,
        nn_cfg=nn_cfg,
        output_mode=cfg.regression.output_mode,
    )
    report.timings["fit_surface"] = time.perf_counter() - t0
    report.warnings.extend(surface.warnings)
    basis_ref = None
    if cfg.regression.preset:
        basis_ref = {"preset": cfg.regression.preset, "d": cfg.model.d,
                     "strike": cfg.contract.strike}
    regression.save_surface(surface, out_dir / "surface", basis_ref)
    report.artifacts.append("surface")
    del reg_paths

    if cfg.exposure is not None:
        t0 = time.perf_counter()
        profile = exposure.ExposureProfile([])
        wanted = set(cfg.exposure.estimators)
        exp_seed = derive_seed(seed, "exposure_paths")
        exp_paths = _simulate(cfg, cfg.exposure.m_exposure, exp_seed)

        if "EE1_Q" in wanted:
            profile.extend(exposure.ee_q_surface(policy, surface, exp_paths))
        if "EE2_Q" in wanted:
            profile.extend(exposure.ee_q_cashflow(policy, exp_paths))
        if "PFE_Q" in wanted:
            profile.extend(exposure.pfe_q(policy, surface, exp_paths, cfg.exposure.alphas))
        if "EE3_P" in wanted:
            profile.extend(
                exposure.ee_p_likelihood(policy, exp_paths, cfg.build_model())
            )

        p_wanted = wanted & {"EE1_P", "EE2_P", "PFE_P"}
        if p_wanted:
            gbm = cfg.build_model()

            def switched(n, _cache={}):
                if n not in _cache:
                    _cache.clear()  # keep a single set alive
                    _cache[n] = simulate_switched(
                        gbm, grid, grid.exercise_dates[n], cfg.exposure.m_exposure,
                        derive_seed(seed, "switched_paths", n),
                    )
                return _cache[n]

            if "EE1_P" in wanted:
                profile.extend(exposure.ee_p_surface(policy, surface, switched))
            if "EE2_P" in wanted:
                profile.extend(exposure.ee_p_cashflow(policy, switched))
            if "PFE_P" in wanted:
                profile.extend(exposure.pfe_p(policy, surface, switched, cfg.exposure.alphas))
        report.timings["exposure"] = time.perf_counter() - t0
        exposure.write_exposure_csv(profile, out_dir / "exposure_profile.csv")
        report.artifacts.append("exposure_profile.csv")

    if cfg.boundary is not None and cfg.boundary.points > 0:
        _write_boundary(out_dir / "boundary_grid.csv", cfg, policy, baseline_models)
        report.artifacts.append("boundary_grid.csv")

    _write_report(out_dir, report)
    return report


def _write_prices(file: Path, rows: list) -> None:
    with open(file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "price", "std_err", "M", "seed"])
        for row in rows:
            writer.writerow(
                [row["method"], _fmt(row["price"]), _fmt(row["std_err"]), row["m"], row["seed"]]
            )


def _write_fractions(file: Path, grid: TimeGrid, fractions: dict) -> None:
    with open(file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "date_index", "t", "fraction"])
        for method in sorted(fractions):
            for n, frac in enumerate(fractions[method]):
                writer.writerow([method, n, _fmt(grid.exercise_dates[n]), _fmt(frac)])


def _state_grid(cfg: ExperimentConfig, lo: float, hi: float, points: int) -> np.ndarray:
    axis = np.linspace(lo, hi, points)
    if cfg.model.kind == "heston":
        v_axis = np.linspace(1e-4, max(4 * cfg.model.theta, cfg.model.nu0 * 4), points)
        vv, ss = np.meshgrid(v_axis, axis, indexing="ij")
        return np.column_stack([vv.ravel(), ss.ravel()])
    if cfg.model.d == 1:
        return axis[:, None]
    if cfg.model.d == 2:
        aa, bb = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([aa.ravel(), bb.ravel()])
    raise ConfigError("boundary grids are available for 1- and 2-dimensional states only")


def _write_boundary(file: Path, cfg: ExperimentConfig, policy, baseline_models: dict) -> None:
    states = _state_grid(cfg, cfg.boundary.lo, cfg.boundary.hi, cfg.boundary.points)
    dim = states.shape[1]
    headers = ["method", "date_index"] + [f"x{i}" for i in range(dim)] + ["exercise"]
    with open(file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for n in cfg.boundary.dates:
            dec = policy.decide(n, states, _memo={})
            for row, flag in zip(states, dec):
                writer.writerow(["dos", n] + [_fmt(x) for x in row] + [int(flag)])
            for name, model in sorted(baseline_models.items()):
                dec = bl.baseline_exercise_region(model, n, states)
                for row, flag in zip(states, dec):
                    writer.writerow([name, n] + [_fmt(x) for x in row] + [int(flag)])


def _write_report(out_dir: Path, report: RunReport) -> None:
    payload = {
        "prices": report.prices,
        "timings": report.timings,
        "warnings": report.warnings,
        "artifacts": report.artifacts,
        "config": report.config_echo,
    }
    (out_dir / "run_report.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


# -- compare -----------------------------------------------------------------


def _read_exposure_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def compare_reports(dirs: list[Path], out_file: Path) -> None:
    """Side-by-side per-date exposure table with pairwise differences and
    combined standard errors; all reports must share the same date grid."""
    tables = []
    for d in dirs:
        f = d / "exposure_profile.csv"
        if not f.exists():
            raise ConfigError(f"{d}: no exposure_profile.csv to compare")
        tables.append(_read_exposure_csv(f))
    tags = [d.name or str(d) for d in dirs]

    def key(row):
        return (row["estimator"], row["alpha"], row["date_index"])

    maps = [{key(r): r for r in t} for t in tables]
    base_keys = [key(r) for r in tables[0]]
    grids = [sorted({(r["date_index"], r["t"]) for r in t}) for t in tables]
    if any(g != grids[0] for g in grids[1:]):
        raise ConfigError("reports to compare have mismatched date grids")
    for m in maps[1:]:
        if set(m) != set(maps[0]):
            raise ConfigError("reports to compare carry different estimator rows")

    headers = ["estimator", "alpha", "date_index", "t"]
    for tag in tags:
        headers += [f"value[{tag}]", f"std_err[{tag}]"]
    for i in range(len(tags)):
        for j in range(i + 1, len(tags)):
            headers += [f"diff[{tags[i]}-{tags[j]}]", f"combined_se[{tags[i]},{tags[j]}]"]
    with open(out_file, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for k in base_keys:
            rows = [m[k] for m in maps]
            out = [k[0], k[1], k[2], rows[0]["t"]]
            vals, ses = [], []
            for r in rows:
                vals.append(float(r["value"]))
                ses.append(float(r["std_err"]) if r["std_err"] else float("nan"))
                out += [r["value"], r["std_err"]]
            for i in range(len(rows)):
                for j in range(i + 1, len(rows)):
                    diff = vals[i] - vals[j]
                    comb = (ses[i] ** 2 + ses[j] ** 2) ** 0.5
                    out += [_fmt(diff), "" if np.isnan(comb) else _fmt(comb)]
            writer.writerow(out)


# -- entry point ---------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bermex", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="full pipeline: train, price, regress, estimate")
    p_run.add_argument("config", help="config file path or bundled preset name")
    p_run.add_argument("--out", help="output directory (overrides the config)")

    p_price = sub.add_parser("price", help="train and price only, skip exposure")
    p_price.add_argument("config")
    p_price.add_argument("--out")

    p_cmp = sub.add_parser("compare", help="side-by-side table from run outputs")
    p_cmp.add_argument("reports", nargs="+", help="run output directories")
    p_cmp.add_argument("--out", default="comparison.csv")

    p_b = sub.add_parser("boundary", help="exercise-region grid from a saved policy")
    p_b.add_argument("policy", help="policy bundle directory")
    p_b.add_argument("--dates", required=True, help="comma-separated date indices")
    p_b.add_argument("--lo", type=float, required=True)
    p_b.add_argument("--hi", type=float, required=True)
    p_b.add_argument("--points", type=int, default=64)
    p_b.add_argument("--out", default="boundary_grid.csv")

    args = parser.parse_args(argv)
    try:
        if args.verb in ("run", "price"):
            cfg = load_config(args.config)
            out_dir = Path(args.out or cfg.output_dir)
            run_pipeline(cfg, out_dir, price_only=args.verb == "price")
            print(f"artifacts written to {out_dir}")
        elif args.verb == "compare":
            compare_reports([Path(p) for p in args.reports], Path(args.out))
            print(f"comparison written to {args.out}")
        else:
            policy = dos.load_policy(args.policy)
            dates = [int(x) for x in args.dates.replace(",", " ").split()]
            dim = policy.spec.input_dim - (1 if policy.augment_payoff else 0)
            axis = np.linspace(args.lo, args.hi, args.points)
            if dim == 1:
                states = axis[:, None]
            elif dim == 2:
                aa, bb = np.meshgrid(axis, axis, indexing="ij")
                states = np.column_stack([aa.ravel(), bb.ravel()])
            else:
                raise ConfigError("boundary grids support 1- and 2-dimensional states only")
            with open(args.out, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["method", "date_index"] + [f"x{i}" for i in range(dim)] + ["exercise"])
                for n in dates:
                    dec = policy.decide(n, states, _memo={})
                    for row, flag in zip(states, dec):
                        writer.writerow(["dos", n] + [_fmt(x) for x in row] + [int(flag)])
            print(f"boundary grid written to {args.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
