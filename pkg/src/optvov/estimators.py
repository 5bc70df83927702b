"""Truncated volatility-of-volatility and leverage-effect estimators with feasible inference.

Increment arrays are ordered as in the backward-looking window: element 0 is the most
recent increment (V at t minus V at t - Delta), element k-1 the oldest. NaN marks a
missing increment; every sum term touching one is dropped and the sum rescaled by
nominal/valid term counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .charfn import U_LEVEL, transform_derivative

AVAR_FLOOR = 1e-12


def truncate(x, upsilon=math.inf):
    """x * 1{|x| <= upsilon}; NaN passes through."""
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) <= upsilon, x, np.where(np.isnan(x), np.nan, 0.0))
    return float(out) if out.ndim == 0 else out


def truncation_threshold(abs_increment_history, delta_n: float, power: float = 0.49,
                         multiplier: float = 3.0) -> float:
    """Bipower-based threshold from the current and previous days' increments.

    ``abs_increment_history`` is a sequence of per-day increment arrays (current day
    first). With four days this is 3 * ((pi/8) / ((k-1) Delta) * sum_days sum_i |d_i||d_{i-1}|)^0.49.
    """
    days = [np.abs(np.asarray(d, dtype=float)) for d in abs_increment_history]
    if not days:
        raise ValueError("no increment history")
    total = 0.0
    for d in days:
        prod = d[1:] * d[:-1]
        ok = np.isfinite(prod)
        n_nominal = len(prod)
        if ok.sum():
            total += prod[ok].sum() * n_nominal / ok.sum()
    k = len(days[0])
    bv = (math.pi / 2) / len(days) * total / ((k - 1) * delta_n)
    return multiplier * bv**power


def _scaled_sum(terms, nominal):
    ok = np.isfinite(terms)
    n = int(ok.sum())
    if n == 0:
        return math.nan
    return float(terms[ok].sum()) * nominal / n


@dataclass
class IncrementSeries:
    delta_n: float
    v_increments: np.ndarray
    x_increments: np.ndarray | None = None

    def __post_init__(self):
        self.v_increments = np.asarray(self.v_increments, dtype=float)
        if self.x_increments is not None:
            self.x_increments = np.asarray(self.x_increments, dtype=float)
            if self.x_increments.shape != self.v_increments.shape:
                raise ValueError("price and variance increments must have equal lengths")
        if not self.delta_n > 0:
            raise ValueError("delta_n must be positive")

    @property
    def k_n(self) -> int:
        return len(self.v_increments)

    @property
    def missing(self) -> np.ndarray:
        miss = np.isnan(self.v_increments)
        if self.x_increments is not None:
            miss = miss | np.isnan(self.x_increments)
        return miss

    @property
    def missing_fraction(self) -> float:
        return float(np.isnan(self.v_increments).mean()) if self.k_n else 1.0


def q_statistics(v_increments, upsilon=math.inf) -> np.ndarray:
    """q_i = tau(d_i)^2 + 2 tau(d_{i-1}) tau(d_i) for i = 2..k (length k-1)."""
    td = truncate(v_increments, upsilon)
    return td[1:] ** 2 + 2.0 * td[:-1] * td[1:]


def vv_estimate(series: IncrementSeries, upsilon=math.inf) -> float:
    k = series.k_n
    if k < 2:
        raise ValueError("need at least two increments")
    q = q_statistics(series.v_increments, upsilon)
    return _scaled_sum(q, k - 1) / (k * series.delta_n)


def lv_estimate(series: IncrementSeries, upsilon=math.inf, x_upsilon=math.inf) -> float:
    if series.x_increments is None:
        raise ValueError("price increments are required")
    k = series.k_n
    a = truncate(series.x_increments, x_upsilon) * truncate(series.v_increments, upsilon)
    return _scaled_sum(a, k) / (k * series.delta_n)


def vv_avar(series: IncrementSeries, upsilon=math.inf, floor: float = AVAR_FLOOR):
    """Feasible asymptotic variance AVar0 + 2 AVar1 built from q-statistic products.

    Returns ``(avar, floored)``.
    """
    k = series.k_n
    q = q_statistics(series.v_increments, upsilon)  # q[0] is q_2
    d2 = k * series.delta_n**2
    sq = _scaled_sum(q * q, k - 1)
    lag1 = _scaled_sum(q[1:] * q[:-1], k - 2) if k >= 3 else 0.0
    lag2 = _scaled_sum(q[2:] * q[:-2], k - 3) if k >= 4 else 0.0
    avar0 = (sq - lag2) / d2
    avar1 = (lag1 - lag2) / d2
    avar = avar0 + 2.0 * avar1
    if not math.isfinite(avar):
        return math.nan, False
    if avar < floor:
        return floor, True
    return avar, False


def lv_avar(series: IncrementSeries, upsilon=math.inf, x_upsilon=math.inf, floor: float = AVAR_FLOOR):
    """Feasible asymptotic variance of the leverage estimator; returns ``(avar, floored)``."""
    k = series.k_n
    a = truncate(series.x_increments, x_upsilon) * truncate(series.v_increments, upsilon)
    sq = _scaled_sum(a * a, k)
    lag2 = _scaled_sum(a[2:] * a[:-2], k - 2) if k >= 3 else 0.0
    avar = (sq - lag2) / (k * series.delta_n**2)
    if not math.isfinite(avar):
        return math.nan, False
    if avar < floor:
        return floor, True
    return avar, False


def confidence_interval(estimate: float, avar: float, k_n: int, level: float = 0.95):
    z = stats.norm.ppf(0.5 + level / 2.0) if level > 0 else 0.0
    half = z * math.sqrt(max(avar, 0.0) / k_n)
    return float(estimate - half), float(estimate + half)


@dataclass
class VVLVResult:
    estimate: float
    avar: float
    ci_low: float
    ci_high: float
    k_n: int
    upsilon: float
    level: float = 0.95
    diagnostics: dict = field(default_factory=dict)

    def covers(self, truth: float) -> bool:
        return self.ci_low <= truth <= self.ci_high


def _truncated_count(x, upsilon):
    x = np.asarray(x, dtype=float)
    return int(np.sum(np.abs(x[np.isfinite(x)]) > upsilon))


def estimate_vv(series: IncrementSeries, upsilon=math.inf, level: float = 0.95) -> VVLVResult:
    est = vv_estimate(series, upsilon)
    avar, floored = vv_avar(series, upsilon)
    lo, hi = confidence_interval(est, avar, series.k_n, level)
    diag = {
        "truncated": _truncated_count(series.v_increments, upsilon),
        "missing": int(np.isnan(series.v_increments).sum()),
        "avar_floored": floored,
    }
    return VVLVResult(est, avar, lo, hi, series.k_n, upsilon, level, diag)


def estimate_lv(series: IncrementSeries, upsilon=math.inf, level: float = 0.95,
                x_upsilon=math.inf) -> VVLVResult:
    est = lv_estimate(series, upsilon, x_upsilon)
    avar, floored = lv_avar(series, upsilon, x_upsilon)
    lo, hi = confidence_interval(est, avar, series.k_n, level)
    diag = {
        "truncated": _truncated_count(series.v_increments, upsilon),
        "missing": int(series.missing.sum()),
        "avar_floored": floored,
    }
    return VVLVResult(est, avar, lo, hi, series.k_n, upsilon, level, diag)


# ---------------------------------------------------------------------------
# Theoretical asymptotic variances


def phi_tilde(k):
    """Standard normal density plus |k| times the lower tail at -|k|."""
    a = np.abs(np.asarray(k, dtype=float))
    return stats.norm.pdf(a) + a * stats.norm.cdf(-a)


def noise_kernel_integral(freq: float) -> float:
    """int_R cos^2(freq k) phi_tilde(k)^2 dk by adaptive quadrature."""
    f = lambda k: math.cos(freq * k) ** 2 * float(phi_tilde(k)) ** 2
    val, _ = integrate.quad(f, 0.0, 12.0, epsabs=0.0, epsrel=1e-11, limit=400)
    return 2.0 * val


@dataclass(frozen=True)
class TheoreticalAVarInputs:
    sigma2: float
    vv: float
    lv: float
    phi: float
    rho0: float
    zeta0: float
    u: float
    tau: float = 2.0
    transform: str = "log"
    # long-tenor strike-gap ratio and noise scale; default to the short-tenor values
    rho0_long: float | None = None
    zeta0_long: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError("phi must lie in [0, 1]")


def noise_variance_term(sigma2, u, rho0, zeta0, transform="log") -> float:
    """4 e^{u^2 sigma^2} F'(sigma^2)^2 |sigma|^3 rho0 zeta0^2 int cos^2(u |sigma| k) phi_tilde(k)^2 dk."""
    sig = math.sqrt(sigma2)
    fp = transform_derivative(sigma2, transform)
    return (4.0 * math.exp(u * u * sigma2) * fp**2 * sig**3 * rho0 * zeta0**2
            * noise_kernel_integral(u * sig))


def theoretical_avar(inputs: TheoreticalAVarInputs, which: str = "vv", tenor_mode: str = "single") -> float:
    p = inputs
    v1 = noise_variance_term(p.sigma2, p.u, p.rho0, p.zeta0, p.transform)
    if tenor_mode == "single":
        v = v1
    elif tenor_mode == "double":
        if not p.tau > 1:
            raise ValueError("tau must exceed 1")
        rho_l = p.rho0 if p.rho0_long is None else p.rho0_long
        zeta_l = p.zeta0 if p.zeta0_long is None else p.zeta0_long
        vt = noise_variance_term(p.sigma2, p.u, rho_l, zeta_l, p.transform)
        v = (p.tau / (p.tau - 1)) ** 2 * v1 + (1.0 / (p.tau - 1)) ** 2 * vt
    else:
        raise ValueError("tenor_mode must be 'single' or 'double'")
    phi = p.phi
    if which == "vv":
        return 6 * p.vv**2 * phi**2 + 8 * p.vv * v * phi * (1 - phi) + 40 * v**2 * (1 - phi) ** 2
    if which == "lv":
        return (p.vv * p.sigma2 + p.lv**2) * phi + 2 * p.sigma2 * v * (1 - phi)
    raise ValueError("which must be 'vv' or 'lv'")


def error_balance(delta_n: float, strike_gap: float, tenor: float) -> float:
    """Delta_n / (Delta_n + delta / sqrt(T)), the finite-sample counterpart of phi."""
    return delta_n / (delta_n + strike_gap / math.sqrt(tenor))


def theoretical_estimator_variance(inputs: TheoreticalAVarInputs, which: str, tenor_mode: str,
                                   k_n: int, delta_n: float, strike_gap: float, tenor: float) -> float:
    """Finite-sample variance implied by the asymptotic one, on the same scale as AVar_hat / k_n."""
    r = error_balance(delta_n, strike_gap, tenor)
    av = theoretical_avar(inputs, which, tenor_mode)
    return av / (k_n * r**2) if which == "vv" else av / (k_n * r)


# ---------------------------------------------------------------------------
# Return-based competitors


def return_cf(returns, u: float, delta_fine: float) -> complex:
    r = np.asarray(returns, dtype=float)
    return complex(np.mean(np.exp(1j * u * r / math.sqrt(delta_fine))))


def return_spot_vol(returns, u: float, delta_fine: float) -> float:
    """-2/u^2 log|L_ret(u)|; NaN when the modulus is zero."""
    mod = abs(return_cf(returns, u, delta_fine))
    return -2.0 / u**2 * math.log(mod) if mod > 0 else math.nan


def rv_bv(returns, delta_fine: float):
    """Realized and bipower variance, annualized by the window length count * delta_fine."""
    r = np.asarray(returns, dtype=float)
    window = len(r) * delta_fine
    rv = float(np.sum(r * r)) / window
    bv = (math.pi / 2) * float(np.sum(np.abs(r[1:]) * np.abs(r[:-1]))) / window
    return rv, bv


def select_u_ret(rv: float, bv: float, level: float = U_LEVEL) -> float:
    return math.sqrt(-2.0 * math.log(level) / min(rv, bv))


def vv_ret(v_hat, delta_n: float, k_n: int, upsilon=math.inf) -> float:
    """Return-based VV from block estimates V_hat(t_0), ..., V_hat(t_{k_n-1}) (most recent first)."""
    v = np.asarray(v_hat, dtype=float)
    d = v[:-1] - v[1:]  # d[i-1] = Delta_i, i = 1..k_n-1
    q = q_statistics(d, upsilon)
    return _scaled_sum(q, len(q)) / (k_n * delta_n)


def lv_ret(v_hat, x_at_times, delta_n: float, k_n: int, upsilon=math.inf, x_upsilon=math.inf) -> float:
    """Return-based LV pairing Delta_i V_hat with the two-step move x(t_{i-1}) - x(t_{i+1})."""
    v = np.asarray(v_hat, dtype=float)
    x = np.asarray(x_at_times, dtype=float)  # x(t_0), ..., x(t_{k_n})
    d = v[:-1] - v[1:]
    i = np.arange(1, k_n - 1)
    a = truncate(x[i - 1] - x[i + 1], x_upsilon) * truncate(d[i - 1], upsilon)
    return _scaled_sum(a, len(a)) / (k_n * delta_n)
