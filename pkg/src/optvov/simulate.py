"""Statistical-measure simulation of the price/variance path."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .params import ModelParams


@dataclass(frozen=True)
class PricePath:
    times: np.ndarray
    log_price: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        if not (len(self.times) == len(self.log_price) == len(self.variance)):
            raise ValueError("path arrays must have equal lengths")
        for arr in (self.times, self.log_price, self.variance):
            arr.flags.writeable = False

    @property
    def spot(self) -> np.ndarray:
        return np.exp(self.log_price)


def make_rng(seed) -> np.random.Generator:
    """Generator from an int, a (base_seed, index, ...) tuple, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, (tuple, list)):
        return np.random.default_rng(np.random.SeedSequence([int(s) for s in seed]))
    return np.random.default_rng(seed)


def simulate_path(
    params: ModelParams,
    v0: float,
    horizon: float,
    n_steps: int,
    substeps_per_step: int = 10,
    seed=0,
    x0: float | None = None,
) -> PricePath:
    """Simulate the jump-free P dynamics with full-truncation Euler.

        dx = -V/2 dt + sqrt(V) dW,  dV = kappa (theta - V) dt + sigma_v sqrt(V) dB,
        corr(dW, dB) = rho.

    The returned path holds ``n_steps + 1`` points including t=0; internally each
    step is split into ``substeps_per_step`` Euler substeps. ``x0`` is the
    initial price level (defaults to ``params.x0``).
    """
    if not (math.isfinite(v0) and v0 > 0):
        raise ValueError("v0 must be positive and finite")
    if not (math.isfinite(horizon) and horizon > 0):
        raise ValueError("horizon must be positive and finite")
    if n_steps < 1 or substeps_per_step < 1:
        raise ValueError("n_steps and substeps_per_step must be at least 1")
    level = params.x0 if x0 is None else x0

    rng = make_rng(seed)
    n_fine = n_steps * substeps_per_step
    dt = horizon / n_fine
    sdt = math.sqrt(dt)
    zb = rng.standard_normal(n_fine)
    zw = rng.standard_normal(n_fine)

    kappa, theta, sig = params.kappa_v, params.theta_v, params.sigma_v
    # variance recursion is inherently sequential
    v = np.empty(n_fine + 1)
    v[0] = v0
    a = kappa * theta * dt
    b = kappa * dt
    c = sig * sdt
    sqrt = math.sqrt
    vk = v0
    zb_list = zb.tolist()
    for k in range(n_fine):
        vp = vk if vk > 0.0 else 0.0
        vk = vk + a - b * vp + c * sqrt(vp) * zb_list[k]
        v[k + 1] = vk
    vplus = np.maximum(v[:-1], 0.0)
    dw = params.rho * zb + math.sqrt(max(1.0 - params.rho**2, 0.0)) * zw
    dx = -0.5 * vplus * dt + np.sqrt(vplus) * sdt * dw
    x = np.empty(n_fine + 1)
    x[0] = math.log(level)
    np.cumsum(dx, out=x[1:])
    x[1:] += x[0]

    idx = np.arange(0, n_fine + 1, substeps_per_step)
    times = np.arange(n_steps + 1) * (horizon / n_steps)
    return PricePath(times=times, log_price=x[idx].copy(), variance=np.maximum(v[idx], 0.0))


def stationary_variance_quantile(params: ModelParams, p: float) -> float:
    """Quantile of the CIR stationary law Gamma(2 kappa theta / sigma_v^2, sigma_v^2 / (2 kappa))."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if params.sigma_v == 0:
        return params.theta_v
    shape = 2 * params.kappa_v * params.theta_v / params.sigma_v**2
    scale = params.sigma_v**2 / (2 * params.kappa_v)
    return float(stats.gamma.ppf(p, shape, scale=scale))
