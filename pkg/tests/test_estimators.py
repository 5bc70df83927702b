import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from optvov import IncrementSeries, confidence_interval, estimate_lv, estimate_vv, lv_estimate, vv_estimate
from optvov.estimators import (
    TheoreticalAVarInputs,
    lv_avar,
    noise_kernel_integral,
    phi_tilde,
    return_cf,
    return_spot_vol,
    rv_bv,
    select_u_ret,
    theoretical_avar,
    truncate,
    truncation_threshold,
    vv_avar,
    vv_ret,
)

finite = st.floats(-10, 10, allow_nan=False)
increments = hnp.arrays(np.float64, st.integers(4, 60), elements=finite)


def test_truncate_examples():
    assert truncate(0.5, 1) == 0.5
    assert truncate(2, 1) == 0
    assert truncate(-3.0) == -3.0
    assert math.isnan(truncate(math.nan, 1.0))


@settings(max_examples=80)
@given(x=increments, u1=st.floats(0, 10), u2=st.floats(0, 10))
def test_truncation_monotone(x, u1, u2):
    lo, hi = sorted((u1, u2))
    a, b = truncate(x, lo), truncate(x, hi)
    assert np.all(np.abs(a) <= np.abs(x))
    assert np.count_nonzero(a) <= np.count_nonzero(b)
    assert np.all((a == 0) | (a == x))


def test_threshold_constant_history():
    k, c, delta = 80, 0.01, 1 / (252 * 80)
    got = truncation_threshold([np.full(k, c)] * 4, delta)
    assert got == pytest.approx(3 * ((math.pi / 8) * 4 * (k - 1) * c * c / ((k - 1) * delta)) ** 0.49, rel=1e-13)
    assert truncation_threshold([np.zeros(k)] * 4, delta) == 0.0


@settings(max_examples=50)
@given(x=increments, scale=st.floats(0.1, 10))
def test_threshold_scales_like_increments(x, scale):
    assume(np.abs(x).sum() > 1e-3)
    base = truncation_threshold([x], 0.01, power=0.5)
    assert truncation_threshold([scale * x], 0.01, power=0.5) == pytest.approx(scale * base, rel=1e-9)


def test_vv_arithmetic_example():
    assert vv_estimate(IncrementSeries(1.0, [1, 1, 1])) == pytest.approx(2.0)


def test_lv_arithmetic_example():
    assert lv_estimate(IncrementSeries(1.0, [2, 3], [1, -1])) == pytest.approx(-0.5)


def test_constant_increment_avars():
    k, c, dlt = 10, 0.3, 0.5
    avar, floored = vv_avar(IncrementSeries(dlt, np.full(k, c)))
    a0 = ((k - 1) - (k - 3)) * 9 * c**4 / (k * dlt**2)
    a1 = ((k - 2) - (k - 3)) * 9 * c**4 / (k * dlt**2)
    assert not floored and avar == pytest.approx(a0 + 2 * a1, rel=1e-13)
    v, x = 0.2, -0.7
    avar, _ = lv_avar(IncrementSeries(dlt, np.full(k, v), np.full(k, x)))
    assert avar == pytest.approx((k * v * v * x * x - (k - 2) * v * v * x * x) / (k * dlt**2), rel=1e-13)


def test_zero_increments():
    s = IncrementSeries(1.0, np.zeros(20), np.zeros(20))
    assert vv_estimate(s) == 0 and lv_estimate(s) == 0
    res = estimate_vv(s)
    assert res.avar == 1e-12 and res.diagnostics["avar_floored"]
    assert lv_avar(s)[1]


def test_confidence_interval():
    lo, hi = confidence_interval(2.0, 4.0, 100, 0.95)
    assert lo == pytest.approx(1.608, abs=1e-3) and hi == pytest.approx(2.392, abs=1e-3)
    assert confidence_interval(2.0, 4.0, 100, 0.0) == (2.0, 2.0)


def test_result_carries_diagnostics_and_covers():
    rng = np.random.default_rng(0)
    d = rng.normal(0, 0.05, 80)
    d[5] = 3.0
    res = estimate_vv(IncrementSeries(0.01, d), upsilon=1.0)
    assert res.diagnostics["truncated"] == 1
    assert res.covers(res.estimate)
    lv = estimate_lv(IncrementSeries(0.01, d, rng.normal(0, 0.01, 80)), upsilon=1.0)
    assert lv.ci_low <= lv.estimate <= lv.ci_high


@settings(max_examples=60)
@given(x=increments, scale=st.floats(0.1, 10))
def test_vv_quadratic_lv_bilinear(x, scale):
    s = IncrementSeries(0.1, x, x[::-1].copy())
    assert vv_estimate(IncrementSeries(0.1, scale * x)) == pytest.approx(scale**2 * vv_estimate(s), rel=1e-9, abs=1e-12)
    s2 = IncrementSeries(0.1, x, scale * x[::-1])
    assert lv_estimate(s2) == pytest.approx(scale * lv_estimate(s), rel=1e-9, abs=1e-12)


def test_missing_terms_rescaled():
    k = 40
    full = IncrementSeries(1.0, np.full(k, 0.5), np.full(k, 2.0))
    holes = np.full(k, 0.5)
    holes[[3, 17]] = np.nan
    gappy = IncrementSeries(1.0, holes, np.full(k, 2.0))
    assert gappy.missing_fraction == pytest.approx(2 / k)
    assert vv_estimate(gappy) == pytest.approx(vv_estimate(full))
    assert lv_estimate(gappy) == pytest.approx(lv_estimate(full))
    assert vv_avar(gappy)[0] == pytest.approx(vv_avar(full)[0])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), v=st.floats(1e-4, 1.0))
def test_noise_bias_cancels_in_expectation(seed, v):
    # E[q_i] = E[d_i^2] + 2 E[d_{i-1} d_i] = 2v - 2v for d_i = e_i - e_{i+1}
    rng = np.random.default_rng(seed)
    n_win, k = 2000, 80
    eps = rng.normal(0, math.sqrt(v), (n_win, k + 1))
    d = eps[:, :-1] - eps[:, 1:]
    est = np.array([vv_estimate(IncrementSeries(1.0, row)) for row in d])
    assert abs(est.mean()) < 5 * est.std() / math.sqrt(n_win)


def test_lv_zero_mean_for_independent_noise():
    rng = np.random.default_rng(4)
    est = [lv_estimate(IncrementSeries(1.0, rng.normal(size=80), rng.normal(size=80))) for _ in range(4000)]
    assert abs(np.mean(est)) < 4 * np.std(est) / math.sqrt(4000)


def test_noise_kernel_integral_oracle():
    mpmath.mp.dps = 30
    phit = lambda k: mpmath.npdf(k) + k * mpmath.ncdf(-k)
    for freq in (0.0, 0.7, 2.5):
        ref = 2 * mpmath.quad(lambda k: mpmath.cos(freq * k) ** 2 * phit(k) ** 2, [0, 2, 6, mpmath.inf])
        assert noise_kernel_integral(freq) == pytest.approx(float(ref), rel=1e-9)
    assert float(phi_tilde(0.0)) == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_theoretical_avar_without_noise():
    inp = TheoreticalAVarInputs(sigma2=0.02, vv=9.6, lv=-0.36, phi=1.0, rho0=1.0, zeta0=0.015, u=11.0)
    assert theoretical_avar(inp, "vv", "single") == pytest.approx(6 * 9.6**2)
    assert theoretical_avar(inp, "vv", "double") == pytest.approx(6 * 9.6**2)
    assert theoretical_avar(inp, "lv", "single") == pytest.approx(9.6 * 0.02 + 0.36**2)


def test_theoretical_avar_noise_only_scaling():
    base = dict(sigma2=0.02, vv=9.6, lv=-0.36, phi=0.0, rho0=1.0, zeta0=0.015, u=0.0)
    single = theoretical_avar(TheoreticalAVarInputs(**base), "vv", "single")
    double = theoretical_avar(TheoreticalAVarInputs(**base), "vv", "double")
    # equal noise in both tenors with tau = 2: v2 = (4 + 1) v1, variance 40 v^2 scales by 25
    assert double == pytest.approx(25 * single, rel=1e-12)
    v1 = 4 * (1 / 0.02) ** 2 * 0.02**1.5 * 0.015**2 * noise_kernel_integral(0.0)
    assert single == pytest.approx(40 * v1**2, rel=1e-12)
    with pytest.raises(ValueError):
        TheoreticalAVarInputs(**dict(base, phi=1.5))


def test_return_cf_and_u_rule():
    assert return_cf(np.array([0.01, -0.02]), 0.0, 1e-5) == 1
    assert select_u_ret(0.02, 0.03) == pytest.approx(10.97, abs=0.01)


def test_rv_bv_constant_returns():
    r, n, dt = 0.003, 72, 1e-5
    rv, bv = rv_bv(np.full(n, r), dt)
    assert rv == pytest.approx(r * r * n / (n * dt))
    assert bv == pytest.approx(math.pi / 2 * r * r * (n - 1) / (n * dt))


def test_return_spot_vol_law_of_large_numbers():
    rng = np.random.default_rng(1)
    dt, n, s2 = 1e-7, 100_000, 0.02
    r = rng.normal(0, math.sqrt(s2 * dt), n)
    rv, bv = rv_bv(r, dt)
    assert rv == pytest.approx(s2, rel=0.02) and bv == pytest.approx(s2, rel=0.03)
    u = select_u_ret(rv, bv)
    assert return_spot_vol(r, u, dt) == pytest.approx(s2, rel=0.05)


def test_vv_ret_zero_for_constant_blocks():
    assert vv_ret(np.full(10, 0.3), 0.01, 10) == 0.0
