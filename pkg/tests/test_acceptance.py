"""Acceptance checks, one printed PASS/FAIL line per criterion.

The Monte Carlo scenarios take several minutes on one core; their per-replication
results are cached in pytest's cache directory keyed by the scenario digest, so a
rerun with an unchanged configuration only re-summarizes. Delete ``.pytest_cache``
for a cold run.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oracles import heston_cf, q_measure_mc_prices  # noqa: E402
from optvov import IncrementSeries, ScenarioConfig, conditional_cf, named_case, price_option, run_mc, vv_estimate  # noqa: E402
from optvov.blackscholes import bs_price  # noqa: E402
from optvov.charfn import select_u, spot_vol_estimate  # noqa: E402
from optvov.harness import summarize  # noqa: E402
from optvov.panel import otm_side  # noqa: E402
from optvov.pricing import vix_scaling_ratio  # noqa: E402

REPS = 1000
F_LEVELS = (0.0078, 0.0156, 0.0275)


def report(capsys, tag, ok, detail):
    line = f"CRITERION {tag}: {'PASS' if ok else 'FAIL'} | {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


def _cache_dir(request):
    return request.config.cache.mkdir("optvov-mc")


_runs = {}


def scenario(request, case, v0):
    key = (case, v0)
    if key not in _runs:
        cfg = ScenarioConfig(case=case, v0=v0, replications=REPS)
        cache = _cache_dir(request)
        cached = (Path(cache) / f"mc-{cfg.digest()}.json").exists()
        t0 = time.perf_counter()
        summary, results = run_mc(cfg, cache_dir=cache)
        wall = "cached" if cached else f"{time.perf_counter() - t0:.0f}s"
        _runs[key] = (summary, results, wall)
    return _runs[key]


def test_1_black_scholes_exactness(capsys):
    t0 = time.perf_counter()
    f, v, tenor, mesh = 2500.0, 0.02, 3 / 252, 0.25
    sd = math.sqrt(v * tenor)
    ks = np.round(np.arange(f * math.exp(-8 * sd), f * math.exp(8 * sd), mesh) / mesh) * mesh
    prices = bs_price(f, ks, tenor, math.sqrt(v), otm_side(ks, f))
    u = select_u(ks, prices, f, tenor, math.sqrt(v))
    s2 = spot_vol_estimate(ks, prices, f, tenor, u, transform="identity").sigma2
    elapsed = time.perf_counter() - t0
    rel = abs(s2 / v - 1)
    assert report(capsys, 1, rel < 5e-3 and elapsed < 1.0,
                  f"sigma2={s2:.6f} rel.err={rel:.2e} (tol 5e-3) runtime={elapsed:.3f}s (tol 1s)")


def test_2_two_tenor_vv_case_m(request, capsys):
    summary, results, elapsed = scenario(request, "M", 0.0167)
    row = summary.rows["VV_TTp"]
    ok = abs(row.bias + 0.05) <= 0.06 and abs(row.std - 0.53) <= 0.10
    smoke = summarize(results[:200]).rows["VV_TTp"]
    smoke_ok = abs(smoke.bias + 0.05) <= 0.15 and abs(smoke.std - 0.53) <= 0.15
    report(capsys, "2 (200-rep smoke)", smoke_ok,
           f"bias={smoke.bias:+.3f} std={smoke.std:.3f} (tol +-0.15 around -0.05 / 0.53)")
    assert report(capsys, 2, ok,
                  f"VV_TTp bias={row.bias:+.3f} (target -0.05+-0.06) std={row.std:.3f} (target 0.53+-0.10) "
                  f"n={row.n} rejected={summary.rejected} wall={elapsed}")


def test_3_two_tenor_lv_case_f(request, capsys):
    summary, _, _ = scenario(request, "F", 0.0156)
    row = summary.rows["LV_TTp"]
    ok = abs(row.bias + 0.01) <= 0.05 and abs(row.std - 0.21) <= 0.06
    assert report(capsys, 3, ok, f"LV_TTp bias={row.bias:+.3f} (target -0.01+-0.05) "
                                 f"std={row.std:.3f} (target 0.21+-0.06)")


def test_4_options_dominate_returns(request, capsys):
    summary, _, _ = scenario(request, "M", 0.0167)
    ratio = summary.rows["VV_ret"].rmse / summary.rows["VV_TTp"].rmse
    assert report(capsys, 4, ratio > 5, f"RMSE(VV_ret)/RMSE(VV_TTp)={ratio:.1f} (need > 5)")


def test_5_two_tenor_debiasing_case_f(request, capsys):
    parts, ok = [], True
    for v0 in F_LEVELS:
        rows = scenario(request, "F", v0)[0].rows
        b2, b1 = rows["VV_TTp"].bias, rows["VV_Tp"].bias
        ok &= abs(b2) < abs(b1)
        parts.append(f"V0={v0}: |{b2:+.3f}| vs |{b1:+.3f}|")
    assert report(capsys, 5, ok, "; ".join(parts))


def test_6_confidence_interval_coverage(request, capsys):
    rows = scenario(request, "M", 0.0167)[0].rows
    cv, cl = rows["VV_TTp"].coverage, rows["LV_TTp"].coverage
    ok = 0.88 <= cv <= 0.99 and 0.88 <= cl <= 0.99
    assert report(capsys, 6, ok, f"coverage VV_TTp={cv:.3f} LV_TTp={cl:.3f} (need 0.88-0.99)")


def test_7_noise_bias_cancellation(capsys):
    rng = np.random.default_rng(2024)
    n_win, k = 10_000, 80
    eps = rng.normal(0.0, 0.01, (n_win, k + 1))
    d = eps[:, :-1] - eps[:, 1:]
    est = np.array([vv_estimate(IncrementSeries(1 / 20160, row)) for row in d])
    se = est.std(ddof=1) / math.sqrt(n_win)
    z = est.mean() / se
    assert report(capsys, 7, abs(z) < 3, f"mean={est.mean():.4g} se={se:.3g} z={z:+.2f} (need |z| < 3)")


def test_8_pricer_correctness(capsys):
    worst_cf = 0.0
    for case in "SMF":
        p = named_case(case).without_jumps()
        for u in (0.5, 5.0, 30.0, 120.0):
            for v, tenor in ((0.0167, 3 / 252), (0.03, 6 / 252)):
                ref = heston_cf(u, v, tenor, p.kappa_v, p.theta_v, p.sigma_v, p.rho)
                worst_cf = max(worst_cf, abs(conditional_cf(p, v, tenor, u) - ref))

    p = named_case("M")
    spot, v0, tenor = 2500.0, 0.0167, 3 / 252
    strikes = np.array([2300, 2350, 2400, 2450, 2500, 2525, 2550, 2600, 2650, 2700.0])
    mc, se = q_measure_mc_prices(p.kappa_v, p.theta_v, p.sigma_v, p.rho, p.c_minus, p.lambda_minus,
                                 p.c_plus, p.lambda_plus, spot, v0, tenor, strikes,
                                 n_paths=10_000_000, n_steps=64, seed=8)
    model = price_option(p, spot, v0, tenor, np.log(strikes))
    z = (model - mc) / se

    worst_parity = 0.0
    k = np.log(np.arange(2000.0, 3000.0, 2.5))
    for case in "SMF":
        pc = named_case(case)
        for v in (0.0078, 0.0167, 0.0275):
            for tn in (2 / 252, 3 / 252, 6 / 252):
                diff = price_option(pc, spot, v, tn, k, "call") - price_option(pc, spot, v, tn, k, "put")
                rhs = spot - np.exp(k)
                worst_parity = max(worst_parity, float(np.max(np.abs(diff - rhs) / np.maximum(np.abs(rhs), spot))))
    ok = worst_cf < 1e-8 and np.all(np.abs(z) < 3) and worst_parity < 1e-8
    assert report(capsys, 8, ok, f"max|CF-Heston|={worst_cf:.1e}; MC z-scores {np.round(z, 2).tolist()} "
                                 f"(need |z|<3); max parity rel.err={worst_parity:.1e}")


def test_9_vix_scaling(capsys):
    p = named_case("F")
    ratios = [vix_scaling_ratio(p, v) for v in F_LEVELS]
    ok = all(0.3 < r < 0.6 for r in ratios)
    assert report(capsys, 9, ok, "s_t = " + ", ".join(f"{r:.5f}" for r in ratios) + " (need each in (0.3, 0.6))")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:randomly"]))
