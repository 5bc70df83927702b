"""Option-implied characteristic function and spot variance recovery."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

U_LEVEL = 0.3
U_CAP_LEVEL = 0.05
U_GRID_POINTS = 1000


@dataclass(frozen=True)
class CFEstimate:
    u: float | np.ndarray  # normalized exponent, acts on (x_{t+T} - x_t) / sqrt(T)
    tenor: float
    value: complex | np.ndarray

    @property
    def modulus(self):
        return np.abs(self.value)

    @property
    def flag(self):
        """True where the modulus lies outside (0, 1)."""
        mod = self.modulus
        return ~((mod > 0) & (mod < 1))


@dataclass(frozen=True)
class SpotVolEstimate:
    obs_time: float
    tenors: tuple
    u: float
    sigma2: float
    transformed: float
    transform: str
    valid: bool
    reason: str = ""


# name -> (F, F')
TRANSFORMS = {
    "identity": (lambda x: x, lambda x: np.ones_like(np.asarray(x, dtype=float))),
    "sqrt": (np.sqrt, lambda x: 0.5 / np.sqrt(x)),
    "log": (np.log, lambda x: 1.0 / np.asarray(x, dtype=float)),
    "logsqrt": (lambda x: 0.5 * np.log(x), lambda x: 0.5 / np.asarray(x, dtype=float)),
}


def _transform(name):
    try:
        return TRANSFORMS[name]
    except KeyError:
        raise ValueError(f"unknown transform {name!r}; choose from {sorted(TRANSFORMS)}") from None


def apply_transform(sigma2, transform: str = "log"):
    out = _transform(transform)[0](np.asarray(sigma2, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def transform_derivative(sigma2, transform: str = "log"):
    out = _transform(transform)[1](np.asarray(sigma2, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def transform_domain_ok(sigma2, transform: str) -> bool:
    return transform == "identity" or sigma2 > 0


def estimate_cf(strikes, prices, spot: float, tenor: float, u) -> CFEstimate:
    """Left-endpoint Riemann sum of the option-spanning integral.

    L(u) = 1 - (u^2/T + i u/sqrt(T)) e^{-x} sum_{j>=2} e^{(i u/sqrt(T) - 1)(k_{j-1} - x)} O(k_{j-1}) delta_j
    with k the log-strikes, x = log(spot) and delta_j = k_j - k_{j-1}.
    """
    k = np.log(np.asarray(strikes, dtype=float))
    o = np.asarray(prices, dtype=float)
    if len(k) < 3:
        raise ValueError("at least three quotes are required")
    x = math.log(spot)
    delta = np.diff(k)
    kl = k[:-1] - x
    # e^{-x} e^{-(k-x)} O = O / K
    w = o[:-1] * np.exp(-kl - x) * delta
    rt = math.sqrt(tenor)
    u_arr = np.asarray(u, dtype=float)
    ut = u_arr / rt
    if u_arr.ndim == 0:
        s = np.sum(w * np.exp(1j * ut * kl))
        val = 1.0 - (u_arr**2 / tenor + 1j * ut) * s
        return CFEstimate(float(u_arr), tenor, complex(val))
    s = np.exp(1j * np.outer(ut, kl)) @ w
    val = 1.0 - (u_arr**2 / tenor + 1j * ut) * s
    return CFEstimate(u_arr, tenor, val)


def spot_variance(cf, u=None):
    """sigma^2 = -2/u^2 log|L|; returns (sigma2, valid) with valid iff |L| in (0, 1)."""
    if isinstance(cf, CFEstimate):
        value, u = cf.value, cf.u if u is None else u
    else:
        value = cf
    if not np.all(np.asarray(u) > 0):
        raise ValueError("u must be positive")
    mod = np.abs(value)
    valid = (mod > 0) & (mod < 1)
    with np.errstate(divide="ignore"):
        s2 = np.where(valid, -2.0 / np.asarray(u, dtype=float) ** 2 * np.log(np.where(valid, mod, 1.0)), np.nan)
    if np.ndim(s2) == 0:
        return float(s2), bool(valid)
    return s2, valid


def spot_vol_estimate(strikes, prices, spot, tenor, u, transform="log", obs_time=0.0) -> SpotVolEstimate:
    cf = estimate_cf(strikes, prices, spot, tenor, u)
    s2, valid = spot_variance(cf)
    reason = "" if valid else "modulus outside (0,1)"
    if valid and not transform_domain_ok(s2, transform):
        valid, reason = False, "nonpositive variance"
    v = apply_transform(s2, transform) if valid else math.nan
    return SpotVolEstimate(obs_time, (tenor,), float(u), s2, v, transform, valid, reason)


def two_tenor_combine(v_short, v_long, T: float, T_prime: float):
    """(T' v_T - T v_T') / (T' - T): cancels any bias linear in the tenor."""
    T, T_prime = np.asarray(T, dtype=float), np.asarray(T_prime, dtype=float)
    if not (np.all(T > 0) and np.all(T_prime > T)):
        raise ValueError("need T' > T > 0")
    out = (T_prime * np.asarray(v_short, dtype=float) - T * np.asarray(v_long, dtype=float)) / (T_prime - T)
    return float(out) if out.ndim == 0 else out


def u_upper_bound(atm_iv: float, floor: float = U_CAP_LEVEL) -> float:
    return math.sqrt(-2.0 * math.log(floor)) / atm_iv


def select_u(strikes, prices, spot: float, tenor: float, atm_iv: float,
             level: float = U_LEVEL, n_grid: int = U_GRID_POINTS) -> float:
    """Smallest u with |L(u)| <= level, or the argmin of |L| on [0, u_bar] if none exists.

    The search runs on a uniform grid of n_grid steps over [0, u_bar],
    u_bar = sqrt(-2 log 0.05) / atm_iv, with linear interpolation at the crossing.
    """
    if not atm_iv > 0:
        raise ValueError("atm_iv must be positive")
    u_bar = u_upper_bound(atm_iv)
    grid = np.linspace(0.0, u_bar, n_grid + 1)
    mod = np.abs(estimate_cf(strikes, prices, spot, tenor, grid).value)
    mod[0] = 1.0
    argmin = grid[1 + int(np.argmin(mod[1:]))]
    hit = np.nonzero(mod[1:] <= level)[0]
    if not len(hit):
        return float(argmin)
    j = hit[0] + 1
    m0, m1 = mod[j - 1], mod[j]
    frac = (m0 - level) / (m0 - m1) if m0 != m1 else 1.0
    crossing = grid[j - 1] + frac * (grid[j] - grid[j - 1])
    return float(min(crossing, argmin))
