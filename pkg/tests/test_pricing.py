import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import black_put, heston_cf, jump_transform_quadrature
from optvov import OptionPanel, build_strike_grid, conditional_cf, named_case, observe_panel, price_option
from optvov.panel import TenorSlice
from optvov.pricing import (
    characteristic_exponent,
    exact_vix_jump_multiplier,
    jump_transform,
    vix_jump_multiplier,
    vix_scaling_ratio,
    vix_squared,
)

T3 = 3 / 252


def test_jump_transform_zero():
    assert jump_transform(0.0, named_case("M")) == 0


@pytest.mark.parametrize("z", [1.0, -1.0, 2.5, -20.0, 40.0])
def test_jump_transform_matches_quadrature(z):
    p = named_case("M")
    ref = jump_transform_quadrature(z, p.c_minus, p.lambda_minus, p.c_plus, p.lambda_plus)
    assert jump_transform(z, p).real == pytest.approx(ref, rel=1e-10)


def test_jump_transform_second_derivative_is_unit_jump_variance():
    p = named_case("M")
    h = 1e-3
    d2 = (jump_transform(h, p) - 2 * jump_transform(0.0, p) + jump_transform(-h, p)).real / h**2
    assert d2 == pytest.approx(1.0, rel=1e-5)


def test_jump_transform_outside_strip_rejected():
    with pytest.raises(ValueError):
        jump_transform(-60.0, named_case("M"))


def test_exponent_makes_price_a_martingale():
    p = named_case("F")
    assert abs(characteristic_exponent(1.0, p)) < 1e-12
    assert conditional_cf(p, 0.03, 6 / 252, -1j) == pytest.approx(1.0, abs=1e-10)


def test_cf_at_zero():
    assert conditional_cf(named_case("M"), 0.0167, T3, 0.0) == 1 + 0j


@pytest.mark.parametrize("case", ["S", "M", "F"])
@pytest.mark.parametrize("u", [0.5, 3.0, 17.0, 60.0, 150.0])
def test_no_jump_cf_matches_closed_form_heston(case, u):
    p = named_case(case).without_jumps()
    for v, tenor in [(0.0167, T3), (0.03, 6 / 252), (0.01, 0.25)]:
        ref = heston_cf(u, v, tenor, p.kappa_v, p.theta_v, p.sigma_v, p.rho)
        assert abs(conditional_cf(p, v, tenor, u) - ref) < 1e-8


def test_constant_variance_cf_is_black_scholes():
    p = named_case("M").without_jumps().with_(sigma_v=1e-9)
    v = 0.02
    for u in (1.0, 10.0, 40.0):
        bs = np.exp(-0.5j * u * v * T3 - 0.5 * u * u * v * T3)
        assert abs(conditional_cf(p, v, T3, u) - bs) < 1e-8


@settings(max_examples=30, deadline=None)
@given(u=st.floats(-300, 300), v=st.floats(1e-4, 0.1), case=st.sampled_from("SMF"))
def test_cf_modulus_bounded_by_one(u, v, case):
    assert abs(conditional_cf(named_case(case), v, T3, u)) <= 1 + 1e-12


def test_black_scholes_limit_atm_put():
    p = named_case("M").without_jumps().with_(sigma_v=0.0)
    p = p.with_(theta_v=0.04)
    spot = 2500.0
    got = price_option(p, spot, 0.04, 1 / 12, math.log(spot))
    sd = math.sqrt(0.04 / 12)
    expected = spot * (2 * 0.5 * math.erfc(-sd / 2 / math.sqrt(2)) - 1)
    assert got == pytest.approx(expected, rel=1e-8)
    assert got == pytest.approx(black_put(spot, spot, 1 / 12, 0.2), rel=1e-8)


def test_deep_otm_prices_small_and_nonnegative():
    p = named_case("M")
    prices = price_option(p, 2500.0, 0.0167, T3, np.log([1200.0, 1500.0, 4000.0]))
    assert np.all(prices >= 0) and np.all(prices < 1e-8)


@pytest.mark.parametrize("case", ["S", "M", "F"])
def test_put_call_parity(case):
    p = named_case(case)
    spot = 2500.0
    k = np.log(np.arange(2200.0, 2800.0, 5.0))
    for v, tenor in [(0.0167, T3), (0.03, 6 / 252)]:
        call = price_option(p, spot, v, tenor, k, side="call")
        put = price_option(p, spot, v, tenor, k, side="put")
        lhs = call - put
        rhs = spot - np.exp(k)
        assert np.all(np.abs(lhs - rhs) <= 1e-8 * np.maximum(np.abs(rhs), spot))


def test_fast_strike_path_agrees_with_generic_pricer():
    p = named_case("F")
    sl = build_strike_grid(p, 2503.7, 0.0156, T3)
    ref = price_option(p, 2503.7, 0.0156, T3, np.log(sl.strikes))
    assert np.allclose(sl.prices, ref, rtol=1e-10, atol=1e-12)


def test_strike_grid_shape():
    p = named_case("M")
    spot = 2501.3
    sl = build_strike_grid(p, spot, 0.0167, T3)
    assert np.all(sl.strikes % 5 == 0)
    assert sl.strikes[0] < spot < sl.strikes[-1]
    assert np.any((sl.strikes <= spot) & (sl.strikes + 5 > spot))
    assert sl.prices[0] < 0.075 and sl.prices[-1] < 0.075
    assert np.all(sl.prices[1:-1] >= 0.075)
    wider = build_strike_grid(p, spot, 0.0269, T3)
    assert len(wider) > len(sl)
    narrow = build_strike_grid(p, spot, 1e-4, 1 / (252 * 80))
    assert len(narrow) < 10


def _panel():
    p = named_case("M")
    sl = build_strike_grid(p, 2500.0, 0.0167, T3)
    return OptionPanel(0.0, 2500.0, [sl])


def test_zero_noise_is_identity():
    panel = _panel()
    out = observe_panel(panel, 0.0, seed=3)
    assert np.array_equal(out.slices[0].prices, panel.slices[0].prices)


def test_noise_has_target_scale_and_no_cross_strike_correlation():
    strikes = np.arange(2000.0, 3000.0, 5.0)
    panel = OptionPanel(0.0, 2500.0, [TenorSlice(T3, strikes, np.ones_like(strikes))])
    rel = np.array([observe_panel(panel, 0.015, seed=(9, i)).slices[0].prices - 1 for i in range(400)])
    assert rel.std() == pytest.approx(0.015, rel=0.02)
    corr = np.corrcoef(rel[:, :50].T)
    off = corr[np.triu_indices(50, 1)]
    # 1225 pairwise correlations over 400 draws: each has sd about 0.05
    assert abs(off.mean()) < 0.01
    assert np.abs(off).max() < 6 / math.sqrt(400)


def test_vix_multipliers():
    p = named_case("M")
    assert vix_jump_multiplier(p) == pytest.approx(1 + 0.9 * 50 / 49 + 0.1 * 100 / 101)
    # exact 1 + 2 int (e^z - 1 - z) nu(dz) from the quadrature oracle
    k1 = jump_transform_quadrature(1.0, p.c_minus, p.lambda_minus, p.c_plus, p.lambda_plus)
    mean_jump = -p.c_minus / p.lambda_minus**2 + p.c_plus / p.lambda_plus**2
    assert exact_vix_jump_multiplier(p) == pytest.approx(1 + 2 * (k1 - mean_jump), rel=1e-10)


def test_vix_limits():
    p = named_case("F")
    m = vix_jump_multiplier(p)
    assert vix_squared(p, p.theta_v) == pytest.approx(m * p.theta_v, rel=1e-14)
    slow = p.with_(kappa_v=1e-10)
    assert vix_squared(slow, 0.01) == pytest.approx(m * 0.01, rel=1e-8)
    assert 0 < vix_scaling_ratio(p, 0.0156) < 1
