"""Market model parameters, exercise grids and immutable path containers."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

MEASURE_Q = "Q"
MEASURE_P = "P"


def switched_measure(date_index: int) -> str:
    """Measure tag for paths with real-world drift up to exercise date ``date_index``."""
    return f"switched@{date_index}"


def parse_switch_index(measure: str) -> int | None:
    """Switch date index encoded in a measure tag, or None for plain Q/P."""
    if measure.startswith("switched@"):
        return int(measure.split("@", 1)[1])
    return None


def correlation_factor(rho: np.ndarray, clip_eps: float = 1e-12) -> np.ndarray:
    """Mixing matrix F with F @ F.T = rho.

    Lower-triangular Cholesky when rho is positive definite.  Numerically
    semi-definite inputs (smallest eigenvalue >= -clip_eps) fall back to an
    eigenvalue-clipped square root.  Anything worse is rejected, naming the
    first non-positive-definite leading minor.
    """
    rho = np.asarray(rho, dtype=np.float64)
    try:
        return np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        pass
    eigvals, eigvecs = np.linalg.eigh(rho)
    if eigvals.min() >= -clip_eps:
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))
    for k in range(1, rho.shape[0] + 1):
        if np.linalg.eigvalsh(rho[:k, :k]).min() < -clip_eps:
            raise np.linalg.LinAlgError(
                f"correlation matrix is not positive semi-definite: "
                f"leading {k}x{k} minor has eigenvalue "
                f"{np.linalg.eigvalsh(rho[:k, :k]).min():.3e}"
            )
    raise np.linalg.LinAlgError("correlation matrix is not positive semi-definite")


def _as_vector(x, d: int, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = np.full(d, float(v))
    if v.shape != (d,):
        raise ValueError(f"{name} must be scalar or length-{d}, got shape {v.shape}")
    return v


@dataclass(frozen=True)
class GbmModel:
    """Multi-asset Black-Scholes market.

    Each asset follows dS_i/S_i = (A_i - q_i) dt + sigma_i dW_i with
    correlated Brownian drivers; A_i is the risk-free rate under the
    risk-neutral measure and ``mu_p[i]`` under the real-world measure.
    """

    d: int
    s0: np.ndarray
    r: float
    q: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    mu_p: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "s0", _as_vector(self.s0, self.d, "s0"))
        object.__setattr__(self, "q", _as_vector(self.q, self.d, "q"))
        object.__setattr__(self, "sigma", _as_vector(self.sigma, self.d, "sigma"))
        rho = np.asarray(self.rho, dtype=np.float64)
        if rho.shape != (self.d, self.d):
            raise ValueError(f"rho must be {self.d}x{self.d}")
        object.__setattr__(self, "rho", rho)
        if self.mu_p is not None:
            object.__setattr__(self, "mu_p", _as_vector(self.mu_p, self.d, "mu_p"))
        if np.any(self.s0 <= 0):
            raise ValueError("initial prices must be positive")
        if np.any(self.sigma < 0):
            raise ValueError("volatilities must be nonnegative")
        if not np.allclose(rho, rho.T) or not np.allclose(np.diag(rho), 1.0):
            raise ValueError("rho must be symmetric with unit diagonal")
        # raises on non-PSD input, naming the offending leading minor
        object.__setattr__(self, "_corr_factor", correlation_factor(rho))

    @property
    def corr_factor(self) -> np.ndarray:
        return self._corr_factor

    def drift(self, measure: str) -> np.ndarray:
        """Per-asset total drift A_i for the given measure tag."""
        if measure == MEASURE_Q:
            return np.full(self.d, self.r)
        if measure == MEASURE_P:
            if self.mu_p is None:
                raise ValueError("real-world drift mu_p is not set on this model")
            return self.mu_p
        raise ValueError(f"unknown measure {measure!r}")


@dataclass(frozen=True)
class HestonModel:
    """Heston stochastic-volatility market for a single asset.

    ``feller_ok`` records whether 2*kappa*theta >= xi**2; a violation is
    common for calibrated parameters and only triggers a warning.
    """

    s0: float
    nu0: float
    r: float
    q: float
    kappa: float
    theta: float
    xi: float
    rho_nu_s: float

    def __post_init__(self):
        for name in ("s0", "nu0", "kappa", "theta", "xi"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not -1.0 < self.rho_nu_s < 1.0:
            raise ValueError("rho_nu_s must lie in (-1, 1)")
        if self.q < 0:
            raise ValueError("dividend yield must be nonnegative")
        if not self.feller_ok:
            warnings.warn(
                "Feller condition 2*kappa*theta >= xi**2 violated; variance "
                "paths will accumulate mass at zero",
                stacklevel=2,
            )

    @property
    def feller_ok(self) -> bool:
        return 2.0 * self.kappa * self.theta >= self.xi**2


@dataclass(frozen=True)
class TimeGrid:
    """Exercise dates t_0 < ... < t_N plus SDE substeps between them."""

    exercise_dates: np.ndarray
    substeps_per_interval: int = 1

    def __post_init__(self):
        dates = np.asarray(self.exercise_dates, dtype=np.float64)
        object.__setattr__(self, "exercise_dates", dates)
        if dates.ndim != 1 or dates.size < 2:
            raise ValueError("need at least two exercise dates (N >= 1)")
        if np.any(np.diff(dates) <= 0):
            raise ValueError("exercise dates must be strictly increasing")
        if self.substeps_per_interval < 1:
            raise ValueError("substeps_per_interval must be >= 1")

    @classmethod
    def equidistant(cls, t0: float, t_end: float, n_intervals: int, substeps: int = 1) -> "TimeGrid":
        return cls(np.linspace(t0, t_end, n_intervals + 1), substeps)

    @property
    def n(self) -> int:
        """Number of exercise intervals N."""
        return self.exercise_dates.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.exercise_dates)

    def index_of(self, t: float) -> int:
        hits = np.nonzero(np.isclose(self.exercise_dates, t, rtol=0.0, atol=1e-12))[0]
        if hits.size == 0:
            raise ValueError(f"t={t} is not an exercise date of this grid")
        return int(hits[0])


@dataclass(frozen=True)
class PathSet:
    """M x (N+1) x state_dim array of simulated states at the exercise dates.

    Immutable after construction; the underlying buffer is marked read-only
    so a PathSet can be shared freely across threads.  ``price_cols`` names
    the state components that are asset prices (the payoff inputs); for GBM
    that is every column, for Heston the state is (variance, price).
    """

    states: np.ndarray
    grid: TimeGrid
    measure: str
    seed: int
    price_cols: tuple[int, ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 3:
            raise ValueError("states must be M x (N+1) x state_dim")
        if states.shape[0] < 1:
            raise ValueError("need at least one path")
        if states.shape[1] != self.grid.n + 1:
            raise ValueError("states second axis must match the exercise grid")
        if not np.all(np.isfinite(states)):
            raise ValueError("states contain non-finite values")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        if self.price_cols is None:
            object.__setattr__(self, "price_cols", tuple(range(states.shape[2])))

    @property
    def m(self) -> int:
        return self.states.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[2]

    def prices(self, date_index: int) -> np.ndarray:
        """Asset-price components at one exercise date, shape (M, len(price_cols))."""
        return self.states[:, date_index, :][:, list(self.price_cols)]

    def states_at(self, date_index: int) -> np.ndarray:
        return self.states[:, date_index, :]
