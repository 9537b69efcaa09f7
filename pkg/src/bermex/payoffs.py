"""Contract payoffs, moneyness classification and discounting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = (
    "max_call",
    "put",
    "arithmetic_basket_put",
    "arithmetic_basket_call",
    "geometric_basket_call",
)


@dataclass(frozen=True)
class Contract:
    """A Bermudan contract with one payoff shape at every exercise date.

    ``d`` is the number of underlying assets the payoff reads; basket
    payoffs use equal weights 1/d.
    """

    kind: str
    strike: float
    d: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown contract kind {self.kind!r}")
        if self.strike <= 0:
            raise ValueError("strike must be positive")
        if self.kind == "put" and self.d != 1:
            raise ValueError("put contracts are single-asset")


def payoff(contract: Contract, x) -> np.ndarray | float:
    """Immediate exercise value at price vector(s) ``x``.

    ``x`` is one price vector of shape (d,) or a batch (M, d); returns a
    scalar or an (M,) array accordingly.  Values are always >= 0.
    """
    scalar = np.asarray(x).ndim <= 1
    prices = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if prices.shape[1] != contract.d:
        raise ValueError(
            f"contract reads {contract.d} asset price(s), got state dimension {prices.shape[1]}"
        )
    k = contract.strike
    if contract.kind == "max_call":
        raw = prices.max(axis=1) - k
    elif contract.kind == "put":
        raw = k - prices[:, 0]
    elif contract.kind == "arithmetic_basket_put":
        raw = k - prices.mean(axis=1)
    elif contract.kind == "arithmetic_basket_call":
        raw = prices.mean(axis=1) - k
    else:  # geometric_basket_call
        raw = np.exp(np.log(prices).mean(axis=1)) - k
    out = np.maximum(raw, 0.0)
    return float(out[0]) if scalar else out


def is_itm(contract: Contract, x) -> np.ndarray | bool:
    """True where the payoff is strictly positive (the boundary g = 0 is OTM)."""
    g = payoff(contract, x)
    if np.isscalar(g):
        return g > 0.0
    return g > 0.0


def discount(r: float, t_from: float, t_to: float) -> float:
    """Risk-free discount factor exp(-r (t_to - t_from)) for t_to >= t_from."""
    if t_to < t_from:
        raise ValueError("t_to must not precede t_from")
    return math.exp(-r * (t_to - t_from))
