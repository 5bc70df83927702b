"""Black pricing with zero rates, vectorized implied-vol inversion and BSIV strike interpolation."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr, log_ndtr

from .panel import OptionPanel, TenorSlice, otm_side


class ImpliedVolError(ValueError):
    """Raised when a price lies outside the no-arbitrage bounds."""


def _is_call(side, shape):
    if isinstance(side, str):
        if side not in ("call", "put"):
            raise ValueError("side must be 'call' or 'put'")
        return np.full(shape, side == "call")
    return np.broadcast_to(np.asarray(side, dtype=bool), shape)


def bs_price(forward, strike, tenor, vol, side="call"):
    """Black price (zero rates). ``side`` is 'call', 'put' or a boolean is-call array."""
    f, k, t, s = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (forward, strike, tenor, vol)))
    call = _is_call(side, f.shape)
    sd = s * np.sqrt(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.log(f / k) / sd + 0.5 * sd
    d2 = d1 - sd
    c = f * ndtr(d1) - k * ndtr(d2)
    p = k * ndtr(-d2) - f * ndtr(-d1)
    out = np.where(call, c, p)
    intrinsic = np.where(call, np.maximum(f - k, 0.0), np.maximum(k - f, 0.0))
    out = np.where(sd > 0, out, intrinsic)
    return float(out) if out.ndim == 0 else out


def bs_vega(forward, strike, tenor, vol):
    f, k, t, s = (np.asarray(a, dtype=float) for a in (forward, strike, tenor, vol))
    sd = s * np.sqrt(t)
    d1 = np.log(f / k) / sd + 0.5 * sd
    return f * np.sqrt(t) * np.exp(-0.5 * d1 * d1) / math.sqrt(2 * math.pi)


def _otm_normalized(m, sd):
    """Unit-forward OTM price at log-moneyness m (call for m > 0) and its log, vectorized."""
    d1 = -m / sd + 0.5 * sd
    d2 = d1 - sd
    call = m > 0
    # OTM leg: call N(d1) - e^m N(d2) or put e^m N(-d2) - N(-d1); both are differences of two
    # tail probabilities, computed from log-tails to keep tiny prices accurate
    la = np.where(call, log_ndtr(d1), m + log_ndtr(-d2))
    lb = np.where(call, m + log_ndtr(d2), log_ndtr(-d1))
    diff = lb - la
    logp = la + np.log(-np.expm1(np.minimum(diff, -1e-300)))
    return np.exp(logp), logp


def implied_vol(price, forward, strike, tenor, side="call", errors: str = "raise",
                tol: float = 1e-12, max_iter: int = 100):
    """Black implied volatility by safeguarded Newton iteration on the log OTM price.

    ITM prices are mapped to their OTM counterpart through put-call parity. Prices at or
    below intrinsic, or at or above the upper bound, raise ``ImpliedVolError`` naming the
    bound (``errors='raise'``) or yield NaN (``errors='nan'``).
    """
    p, f, k, t = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (price, forward, strike, tenor)))
    shape = p.shape
    call = _is_call(side, shape).ravel()
    p, f, k, t = (a.ravel() for a in (p, f, k, t))
    intrinsic = np.where(call, np.maximum(f - k, 0.0), np.maximum(k - f, 0.0))
    upper = np.where(call, f, k)
    low_bad = ~(p > intrinsic)
    high_bad = ~(p < upper)
    bad = low_bad | high_bad | ~(t > 0) | ~np.isfinite(p)
    if errors == "raise" and np.any(bad):
        which = "lower (intrinsic value)" if np.any(low_bad) else "upper (forward/strike)"
        raise ImpliedVolError(f"price violates the {which} no-arbitrage bound")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vol = _solve_total_sd(p, f, k, intrinsic, bad, tol, max_iter) / np.sqrt(np.where(t > 0, t, 1.0))
    vol = np.where(bad, np.nan, vol).reshape(shape)
    return float(vol) if vol.ndim == 0 else vol


def _solve_total_sd(p, f, k, intrinsic, bad, tol, max_iter):
    m = np.log(k / f)
    # time value of the OTM leg, per unit forward
    tv = (p - intrinsic) / f
    target = np.where(bad, np.nan, np.log(np.where(bad, 1.0, tv)))
    x = np.where(bad, 1.0, _initial_total_sd(m, tv))
    lo = np.zeros_like(x)
    hi = np.full_like(x, np.inf)
    active = ~bad
    for _ in range(max_iter):
        if not active.any():
            break
        xa = x[active]
        val, logv = _otm_normalized(m[active], xa)
        g = logv - target[active]
        # bracket update: log price is increasing in total sd
        lo_a, hi_a = lo[active], hi[active]
        lo_a = np.where(g < 0, xa, lo_a)
        hi_a = np.where(g > 0, xa, hi_a)
        d1 = -m[active] / xa + 0.5 * xa
        dens = np.exp(-0.5 * d1 * d1 - 0.5 * math.log(2 * math.pi))
        step = g * val / dens  # g / (d log price / d sd)
        new = xa - step
        out = ~((new > lo_a) & (new < hi_a)) | ~np.isfinite(new)
        bis = np.where(np.isfinite(hi_a), 0.5 * (lo_a + hi_a), 2.0 * xa)
        new = np.where(out, bis, new)
        done = (np.abs(new - xa) <= tol * np.maximum(xa, 1e-8)) | (g == 0)
        x[active] = new
        lo[active], hi[active] = lo_a, hi_a
        idx = np.nonzero(active)[0]
        active[idx[done]] = False
    return x


def _initial_total_sd(m, tv):
    # Brenner-Subrahmanyam near the money, pushed up for far wings
    guess = tv * math.sqrt(2 * math.pi)
    wing = np.sqrt(2 * np.abs(m) / np.maximum(-np.log(np.maximum(tv, 1e-300)), 1.0))
    return np.clip(np.maximum(guess, wing), 1e-4, 5.0)


def interpolate_slice(sl: TenorSlice, forward: float, mesh: float = 2.5,
                      vols: np.ndarray | None = None, min_quotes: int = 3):
    """Densify one tenor's OTM quotes by linear interpolation of BSIV in log-strike.

    Returns ``(TenorSlice, n_dropped, atm_vol)``. Quotes whose implied vol cannot be
    computed are dropped and counted. ``vols`` may carry precomputed implied vols.
    """
    if vols is None:
        vols = implied_vol(sl.prices, forward, sl.strikes, sl.tenor,
                           otm_side(sl.strikes, forward), errors="nan")
    ok = np.isfinite(vols) & (vols > 0)
    n_dropped = int((~ok).sum())
    if ok.sum() < min_quotes:
        raise ValueError(f"only {int(ok.sum())} valid quotes for tenor {sl.tenor:.6g}")
    ks, iv = sl.strikes[ok], vols[ok]
    lo = math.ceil(ks[0] / mesh - 1e-9)
    hi = math.floor(ks[-1] / mesh + 1e-9)
    grid = mesh * np.arange(lo, hi + 1)
    # keep original endpoints even when they are not multiples of the mesh
    if grid[0] > ks[0]:
        grid = np.concatenate([[ks[0]], grid])
    if grid[-1] < ks[-1]:
        grid = np.concatenate([grid, [ks[-1]]])
    logk = np.log(ks)
    giv = np.interp(np.log(grid), logk, iv)
    prices = bs_price(forward, grid, sl.tenor, giv, otm_side(grid, forward))
    atm_vol = float(np.interp(math.log(forward), logk, iv))
    return TenorSlice(sl.tenor, grid, prices, expiry_key=sl.expiry_key), n_dropped, atm_vol


def interpolate_panel(panel: OptionPanel, mesh: float = 2.5) -> OptionPanel:
    """Apply :func:`interpolate_slice` to every tenor; drop counts land in ``meta``."""
    slices, dropped, atm = [], [], []
    for sl in panel.slices:
        new, nd, a = interpolate_slice(sl, panel.forward, mesh)
        slices.append(new)
        dropped.append(nd)
        atm.append(a)
    meta = dict(panel.meta, dropped=dropped, atm_vol=atm)
    return OptionPanel(panel.obs_time, panel.spot, slices, panel.forward, meta)
