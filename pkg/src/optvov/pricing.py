"""Q-measure option pricing for the affine Heston model with variance-proportional jumps.

The conditional transform is exponential-affine in the variance,

    E_Q[exp(z (x_{t+T} - x_t)) | V_t = V] = exp(alpha(z, T) + beta(z, T) V),

with (alpha, beta) solving a Riccati system integrated numerically. Out-of-the-money
prices come from Fourier inversion of the transform of the OTM price function,
using a Black-Scholes control to remove the at-the-money kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import ndtr

from .panel import OptionPanel, TenorSlice
from .params import ModelParams
from .simulate import make_rng

VIX_HORIZON = 1.0 / 12.0


def jump_transform(z, params: ModelParams):
    """Jump Laplace exponent per unit variance, int (e^{zx} - 1) nu(dx) with V=1.

    Valid on the strip -lambda_minus < Re z < lambda_plus.
    """
    z = np.asarray(z, dtype=complex)
    lm, lp = params.lambda_minus, params.lambda_plus
    if np.any(z.real <= -lm) or np.any(z.real >= lp):
        raise ValueError(f"Re(z) outside the integrability strip ({-lm}, {lp})")
    out = -params.c_minus * z / (lm * (lm + z)) + params.c_plus * z / (lp * (lp - z))
    return out if out.ndim else complex(out)


def characteristic_exponent(z, params: ModelParams):
    """Per-unit-variance generator of x under Q with compensated jumps.

    psi(z) = (z^2 - z)/2 + k(z) - z k(1), so psi(1) = 0 and e^x is a martingale.
    """
    z = np.asarray(z, dtype=complex)
    return 0.5 * (z * z - z) + jump_transform(z, params) - z * jump_transform(1.0, params)


def solve_riccati(params: ModelParams, z, tenors, rtol: float = 1e-10, atol: float = 1e-13):
    """Integrate (alpha, beta) for each z up to every tenor in one pass.

    Returns two complex arrays of shape (len(tenors), len(z)).
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    tenors = np.atleast_1d(np.asarray(tenors, dtype=float))
    if np.any(tenors < 0):
        raise ValueError("tenors must be nonnegative")
    n = len(z)
    psi = characteristic_exponent(z, params)
    lin = params.rho * params.sigma_v * z - params.kappa_v
    half_s2 = 0.5 * params.sigma_v**2
    kt = params.kappa_v * params.theta_v

    def rhs(_, y):
        beta = y[n:]
        return np.concatenate([kt * beta, psi + (lin + half_s2 * beta) * beta])

    order = np.argsort(tenors)
    t_sorted = tenors[order]
    t_end = float(t_sorted[-1])
    alpha = np.zeros((len(tenors), n), dtype=complex)
    beta = np.zeros((len(tenors), n), dtype=complex)
    if t_end == 0.0:
        return alpha, beta
    sol = solve_ivp(
        rhs, (0.0, t_end), np.zeros(2 * n, dtype=complex),
        method="DOP853", t_eval=t_sorted, rtol=rtol, atol=atol,
    )
    if not sol.success or not np.all(np.isfinite(sol.y)):
        raise RuntimeError(
            f"Riccati solve failed ({sol.message}); |z| max={np.abs(z).max():.3g}, "
            f"T={t_end:.4g}, nfev={sol.nfev}"
        )
    alpha[order] = sol.y[:n].T
    beta[order] = sol.y[n:].T
    return alpha, beta


@dataclass(frozen=True)
class CFSolution:
    """exp(alpha + beta V) is the conditional transform at argument z = i u."""

    u: np.ndarray
    tenor: float
    alpha: np.ndarray
    beta: np.ndarray

    def value(self, v: float):
        return np.exp(self.alpha + self.beta * v)


def cf_solution(params: ModelParams, tenor: float, u) -> CFSolution:
    if not tenor > 0:
        raise ValueError("tenor must be positive")
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    a, b = solve_riccati(params, 1j * u, [tenor])
    return CFSolution(u=u, tenor=tenor, alpha=a[0], beta=b[0])


def conditional_cf(params: ModelParams, v: float, tenor: float, u):
    """E_Q[exp(i u (x_{t+T} - x_t)) | V_t = v]; u may be an array (complex u allowed)."""
    scalar = np.ndim(u) == 0
    out = cf_solution(params, tenor, u).value(v)
    return complex(out[0]) if scalar else out


def bs_otm_normalized(m, total_sd):
    """Black-Scholes OTM price with unit forward at log-moneyness m (put for m <= 0)."""
    m = np.asarray(m, dtype=float)
    s = np.maximum(total_sd, 1e-300)
    d1 = -m / s + 0.5 * s
    d2 = d1 - s
    put = np.exp(m) * ndtr(-d2) - ndtr(-d1)
    call = ndtr(d1) - np.exp(m) * ndtr(d2)
    return np.where(m <= 0, put, call)


class FourierPricer:
    """OTM pricer on a fixed midpoint frequency grid, with per-tenor Riccati caches.

    The OTM price function O(m) (unit spot, log-moneyness m) has Fourier transform
    (phi(v - i) - 1) / (i v (1 + i v)); subtracting the same transform for a
    Black-Scholes model with the current variance leaves a smooth, rapidly decaying
    integrand, so a uniform midpoint rule is spectrally accurate for |m| < pi/spacing.
    """

    MAX_ABS_LOGMONEYNESS = 1.0

    def __init__(self, params: ModelParams, spacing: float = 2.5, max_freq: float = 4000.0,
                 strike_step: float = 5.0):
        self.params = params
        self.spacing = spacing
        n = int(math.ceil(max_freq / spacing))
        self.nodes = (np.arange(n) + 0.5) * spacing
        self._z = 1.0 + 1j * self.nodes
        self._denom = 1j * self.nodes * (1.0 + 1j * self.nodes)
        self._coef: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self.strike_step = strike_step
        self._rows = None
        self._row_lo = 0

    # -- transform coefficients -------------------------------------------------
    def prepare(self, tenors) -> None:
        missing = sorted({float(t) for t in np.atleast_1d(tenors)} - self._coef.keys())
        if not missing:
            return
        if min(missing) <= 0:
            raise ValueError("tenors must be positive")
        a, b = solve_riccati(self.params, self._z, missing)
        for i, t in enumerate(missing):
            self._coef[t] = (a[i], b[i])

    def _n_eff(self, v, tenor):
        s2 = max(v, 1e-4) * tenor
        need = math.sqrt(2.0 * 40.0 / s2)
        return min(len(self.nodes), int(need / self.spacing) + 1)

    def _kernel(self, v, tenor):
        tenor = float(tenor)
        if tenor not in self._coef:
            self.prepare([tenor])
        a, b = self._coef[tenor]
        n = self._n_eff(v, tenor)
        nodes = self.nodes[:n]
        s2 = max(v, 1e-12) * tenor
        phi = np.exp(a[:n] + b[:n] * v)
        phi_bs = np.exp(-0.5 * s2 * (nodes * nodes - 1j * nodes))
        g = (phi - phi_bs) / self._denom[:n] * (self.spacing / math.pi)
        return g, math.sqrt(s2), n

    def normalized_otm(self, v: float, tenor: float, m) -> np.ndarray:
        """OTM price per unit spot at log-moneyness m = log(K / X)."""
        m = np.atleast_1d(np.asarray(m, dtype=float))
        g, sd, n = self._kernel(v, tenor)
        phase = np.exp(-1j * np.outer(m, self.nodes[:n]))
        out = bs_otm_normalized(m, sd) + (phase @ g).real
        out[np.abs(m) > self.MAX_ABS_LOGMONEYNESS] = 0.0
        return np.maximum(out, 0.0)

    # -- fast path for strikes on multiples of strike_step ------------------------
    def _phase_rows(self, j_lo: int, j_hi: int) -> np.ndarray:
        if self._rows is None or j_lo < self._row_lo or j_hi > self._row_lo + len(self._rows):
            lo = j_lo if self._rows is None else min(j_lo, self._row_lo)
            hi = j_hi if self._rows is None else max(j_hi, self._row_lo + len(self._rows))
            lo = max(1, lo - 64)
            hi = hi + 64
            logk = np.log(self.strike_step * np.arange(lo, hi))
            self._rows = np.exp(-1j * np.outer(logk, self.nodes))
            self._row_lo = lo
        return self._rows[j_lo - self._row_lo:j_hi - self._row_lo]

    def otm_prices_on_multiples(self, spot: float, v: float, tenor: float, j_lo: int, j_hi: int):
        """Prices at strikes strike_step * j for j in [j_lo, j_hi)."""
        g, sd, n = self._kernel(v, tenor)
        x = math.log(spot)
        h = g * np.exp(1j * self.nodes[:n] * x)
        strikes = self.strike_step * np.arange(j_lo, j_hi)
        m = np.log(strikes) - x
        rows = self._phase_rows(j_lo, j_hi)[:, :n]
        norm = bs_otm_normalized(m, sd) + (rows @ h).real
        norm[np.abs(m) > self.MAX_ABS_LOGMONEYNESS] = 0.0
        return strikes, spot * np.maximum(norm, 0.0)


@lru_cache(maxsize=16)
def get_pricer(params: ModelParams, strike_step: float = 5.0) -> FourierPricer:
    return FourierPricer(params, strike_step=strike_step)


def price_option(params: ModelParams, spot: float, v: float, tenor: float, log_strike,
                 side: str | None = None, pricer: FourierPricer | None = None):
    """European price with zero rates; OTM side by default, or 'put'/'call' via parity."""
    if not tenor > 0:
        raise ValueError("tenor must be positive")
    pricer = pricer or get_pricer(params)
    k = np.asarray(log_strike, dtype=float)
    m = k - math.log(spot)
    otm = spot * pricer.normalized_otm(v, tenor, np.atleast_1d(m)).reshape(k.shape)
    if side is not None:
        if side not in ("put", "call"):
            raise ValueError("side must be 'put' or 'call'")
        is_put_otm = m <= 0
        fwd_minus_k = spot - np.exp(k)
        if side == "put":
            otm = np.where(is_put_otm, otm, otm - fwd_minus_k)
        else:
            otm = np.where(is_put_otm, otm + fwd_minus_k, otm)
    return float(otm) if otm.ndim == 0 else otm


def build_strike_grid(params: ModelParams, spot: float, v: float, tenor: float,
                      step: float = 5.0, threshold: float = 0.075,
                      pricer: FourierPricer | None = None) -> TenorSlice:
    """Multiples of ``step`` extended from the money until the true OTM price drops below
    ``threshold``; the first strike below the threshold on each side is kept."""
    if pricer is None or pricer.strike_step != step:
        pricer = get_pricer(params, step)
    j_put = int(math.floor(spot / step))
    if j_put < 1:
        raise ValueError("spot below the first strike")
    jump_var = params.jump_variation
    width = int(math.ceil(8 * math.sqrt(max(v, 1e-6) * (1 + jump_var) * tenor) * spot / step)) + 4
    while True:
        lo = max(1, j_put - width)
        hi = j_put + 1 + width
        strikes, prices = pricer.otm_prices_on_multiples(spot, v, tenor, lo, hi)
        ip = j_put - lo
        below = prices < threshold
        put_side = np.nonzero(below[: ip + 1][::-1])[0]
        call_side = np.nonzero(below[ip + 1:])[0]
        if len(put_side) and len(call_side):
            a = ip - put_side[0]
            b = ip + 1 + call_side[0]
            return TenorSlice(tenor=tenor, strikes=strikes[a:b + 1], prices=prices[a:b + 1])
        if lo == 1 and not len(put_side):
            return TenorSlice(tenor=tenor, strikes=strikes[: ip + 2 + call_side[0]],
                              prices=prices[: ip + 2 + call_side[0]])
        width *= 2


def observe_panel(panel: OptionPanel, noise_scale: float = 0.015, seed=0,
                  min_tick: float = 0.01) -> OptionPanel:
    """Multiply every price by (1 + noise_scale z), z iid N(0,1); floor nonpositive at min_tick."""
    rng = make_rng(seed)
    slices = []
    for sl in panel.slices:
        z = rng.standard_normal(len(sl.prices))
        noisy = sl.prices * (1.0 + noise_scale * z)
        floored = noisy <= 0
        noisy[floored] = min_tick
        slices.append(TenorSlice(sl.tenor, sl.strikes.copy(), noisy, flags=floored,
                                 expiry_key=sl.expiry_key))
    meta = dict(panel.meta, floored=int(sum(int(s.flags.sum()) for s in slices)))
    return OptionPanel(panel.obs_time, panel.spot, slices, panel.forward, meta)


def vix_jump_multiplier(params: ModelParams) -> float:
    """Jump multiplier as displayed for the variance-swap rate of the simulation model."""
    lm, lp = params.lambda_minus, params.lambda_plus
    return 1.0 + 0.9 * lm / (lm - 1.0) + 0.1 * lp / (lp + 1.0)


def exact_vix_jump_multiplier(params: ModelParams) -> float:
    """1 + 2 int (e^z - 1 - z) nu(dz) per unit variance, for general c and lambda."""
    lm, lp = params.lambda_minus, params.lambda_plus
    return 1.0 + 2 * params.c_minus / (lm**2 * (lm + 1)) + 2 * params.c_plus / (lp**2 * (lp - 1))


def vix_squared(params: ModelParams, v: float, horizon: float = VIX_HORIZON) -> float:
    w = _mean_reversion_weight(params.kappa_v, horizon)
    return vix_jump_multiplier(params) * (v * w + params.theta_v * (1.0 - w))


def vix_scaling_ratio(params: ModelParams, v: float, horizon: float = VIX_HORIZON) -> float:
    """Ratio of the diffusion coefficients of log VIX^2 and log V."""
    w = _mean_reversion_weight(params.kappa_v, horizon)
    return 2.0 * v / vix_squared(params, v, horizon) * w


def _mean_reversion_weight(kappa, horizon):
    kt = kappa * horizon
    return -math.expm1(-kt) / kt if kt > 1e-12 else 1.0 - 0.5 * kt
