"""Bermudan option exercise policies and counterparty exposure profiles.

Workflow: simulate risk-factor paths, learn a stopping rule (one decision
network per exercise date, trained backward in time), regress pathwise
option values onto the state, and estimate expected / potential future
exposure under the risk-neutral or real-world measure by Monte-Carlo
averages, drift-switched path sets or likelihood-ratio weighting.
"""

from .baselines import LsmModel, SgbmModel, baseline_exercise_region, lsm_fit, sgbm_fit
from .dos import (
    CashflowMatrix,
    DecisionPolicy,
    TrainConfig,
    exercise_fraction,
    load_policy,
    price_lower_bound,
    replay,
    save_policy,
    stopping_time,
    train_policy,
)
from .exposure import (
    ExposureProfile,
    ee_p_cashflow,
    ee_p_likelihood,
    ee_p_surface,
    ee_q_cashflow,
    ee_q_surface,
    percentile_index,
    pfe_p,
    pfe_q,
    write_exposure_csv,
)
from .measure import gbm_transition_density, likelihood_ratio, likelihood_ratios
from .models import GbmModel, HestonModel, PathSet, TimeGrid
from .nn import AdamState, NetParams, NetSpec, adam_step, backward, forward
from .pathio import dump_pathset, load_pathset
from .payoffs import Contract, discount, is_itm, payoff
from .regression import (
    BasisSet,
    ValueSurface,
    fit_nn,
    fit_ols_global,
    fit_ols_local,
    fit_surface,
    laguerre,
    load_surface,
    make_preset_basis,
    save_surface,
)
from .simulate import simulate_gbm, simulate_heston, simulate_switched

__version__ = "0.1.0"
