"""Option quote containers shared by the pricer, the estimators and the CSV pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class OptionQuote:
    log_strike: float
    price: float
    tenor: float
    side: str  # "put" if strike <= forward else "call"

    def __post_init__(self):
        if not self.price > 0:
            raise ValueError("option price must be positive")
        if not self.tenor > 0:
            raise ValueError("tenor must be positive")


def otm_side(strikes, forward) -> np.ndarray:
    """True where the out-of-the-money option is a call (strike above the forward)."""
    return np.asarray(strikes, dtype=float) > forward


@dataclass
class TenorSlice:
    """Out-of-the-money quotes for one tenor on a strictly increasing strike grid."""

    tenor: float
    strikes: np.ndarray
    prices: np.ndarray
    flags: np.ndarray | None = None  # per-quote bool, e.g. price floored after noise
    expiry_key: float | None = None

    def __post_init__(self):
        self.strikes = np.asarray(self.strikes, dtype=float)
        self.prices = np.asarray(self.prices, dtype=float)
        if self.strikes.shape != self.prices.shape or self.strikes.ndim != 1:
            raise ValueError("strikes and prices must be 1-d arrays of equal length")
        if not self.tenor > 0:
            raise ValueError("tenor must be positive")
        if len(self.strikes) > 1 and np.any(np.diff(self.strikes) <= 0):
            raise ValueError("strikes must be strictly increasing")

    @property
    def log_strikes(self) -> np.ndarray:
        return np.log(self.strikes)

    def __len__(self):
        return len(self.strikes)

    def quotes(self, forward: float) -> list[OptionQuote]:
        calls = otm_side(self.strikes, forward)
        return [
            OptionQuote(math.log(k), p, self.tenor, "call" if c else "put")
            for k, p, c in zip(self.strikes, self.prices, calls)
        ]


@dataclass
class OptionPanel:
    """All quotes observed at one time: one or two tenors (short first)."""

    obs_time: float
    spot: float
    slices: list[TenorSlice]
    forward: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.forward is None:
            self.forward = self.spot  # zero rates and dividends
        if len(self.slices) == 2 and not self.slices[1].tenor > self.slices[0].tenor:
            raise ValueError("long tenor must exceed short tenor")

    @property
    def tenors(self) -> list[float]:
        return [s.tenor for s in self.slices]

    @property
    def log_spot(self) -> float:
        return math.log(self.forward)
