"""Spot volatility-of-volatility and leverage-effect estimation from short-dated option panels."""

from .charfn import estimate_cf, select_u, spot_variance, spot_vol_estimate, two_tenor_combine
from .estimators import (
    IncrementSeries,
    VVLVResult,
    confidence_interval,
    estimate_lv,
    estimate_vv,
    lv_estimate,
    vv_estimate,
)
from .harness import ScenarioConfig, ground_truth, run_mc, run_replication
from .panel import OptionPanel, TenorSlice
from .params import CASES, ModelParams, named_case
from .pricing import FourierPricer, build_strike_grid, conditional_cf, observe_panel, price_option
from .simulate import PricePath, simulate_path, stationary_variance_quantile

__all__ = [
    "CASES", "FourierPricer", "IncrementSeries", "ModelParams", "PricePath", "ScenarioConfig", "VVLVResult",
    "OptionPanel", "TenorSlice", "build_strike_grid", "observe_panel", "simulate_path", "stationary_variance_quantile",
    "conditional_cf", "confidence_interval", "estimate_cf", "estimate_lv", "estimate_vv",
    "ground_truth", "lv_estimate", "named_case", "price_option", "run_mc", "run_replication",
    "select_u", "spot_variance", "spot_vol_estimate", "two_tenor_combine", "vv_estimate",
]
