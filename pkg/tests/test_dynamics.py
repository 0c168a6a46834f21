import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize

from thzmm import dynamics, radio
from thzmm.errors import DomainError
from thzmm.scenario import AntennaParams, MicromobilityParams, default_scenario

from oracles import busy_period_des, renewal_periodic, sample_min_lognormal


def unit_mm(mu=0.0, sigma=1.0):
    return MicromobilityParams(mu_x=mu, sigma_x=sigma, mu_y=mu, sigma_y=sigma,
                               mu_phi=mu, sigma_phi=sigma, mu_theta=mu, sigma_theta=sigma)


@pytest.fixture(scope="module")
def scn():
    return default_scenario()


@pytest.fixture(scope="module")
def radii(scn):
    return radio.coverage_radii(scn)


def test_beamalignment_time():
    a = AntennaParams(T_B=(16, 4), T_U=(4, 4), delta=6.944e-6)
    assert dynamics.beamalignment_time(a) == pytest.approx(80 * 6.944e-6)
    assert dynamics.beamalignment_time(replace(a, delta=1 / 1800 / 80)) == pytest.approx(1 / 1800)
    assert dynamics.beamalignment_time(replace(a, delta=0.0)) == 0.0
    double = replace(a, T_B=(32, 4), T_U=(8, 4))
    assert dynamics.beamalignment_time(double) == pytest.approx(2 * dynamics.beamalignment_time(a))
    assert dynamics.beamalignment_time(default_scenario().antenna) == pytest.approx(1 / 1800)


def test_blocker_zone_rate(scn):
    assert dynamics.blocker_zone_rate(0.0, 10.0, scn) == pytest.approx(0.064)
    none = scn.with_value("deployment.lambda_B", 0.0)
    assert dynamics.blocker_zone_rate(30.0, 10.0, none) == 0.0
    tall = scn.with_value("deployment.h_B", 1.9)
    x = np.linspace(0, 100, 11)
    a = dynamics.blocker_zone_rate(x, 10.0, tall)
    slope = np.diff(a)
    assert np.all(slope > 0) and np.allclose(slope, slope[0])
    with pytest.raises(DomainError):
        dynamics.blocker_zone_rate(-1.0, 10.0, scn)


def test_mean_blocked_period_limits(scn):
    none = scn.with_value("deployment.lambda_B", 0.0)
    assert dynamics.mean_blocked_period(0.0, 10.0, none) == pytest.approx(0.8)
    tiny = scn.with_value("deployment.lambda_B", 1e-9)
    assert dynamics.mean_blocked_period(0.0, 10.0, tiny) == pytest.approx(0.8, rel=1e-6)
    # alpha * t0 = ln 2
    lam = math.log(2) / 0.8 / (0.4 * 1.0 * 1.6)
    s = scn.with_value("deployment.lambda_B", lam)
    alpha = dynamics.blocker_zone_rate(0.0, 10.0, s)
    assert dynamics.mean_blocked_period(0.0, 10.0, s) == pytest.approx(1 / alpha, rel=1e-12)


def test_mean_blocked_period_vs_des(scn):
    s = scn.with_value("deployment.lambda_B", 0.1 / (0.4 * 1.6))
    assert dynamics.blocker_zone_rate(0.0, 10.0, s) == pytest.approx(0.1)
    des = busy_period_des(0.1, 0.8, 300_000.0, np.random.default_rng(3))
    assert dynamics.mean_blocked_period(0.0, 10.0, s) == pytest.approx(des, rel=0.02)


@settings(max_examples=60, deadline=None)
@given(lam=st.floats(0, 5), rb=st.floats(0.05, 1), vb=st.floats(0.1, 5), x=st.floats(0, 300))
def test_blocked_period_at_least_one_residence(lam, rb, vb, x):
    s = (default_scenario().with_value("deployment.lambda_B", lam)
         .with_value("deployment.r_B", rb).with_value("deployment.v_B", vb))
    assert dynamics.mean_blocked_period(x, 10.0, s) >= 2 * rb / vb * (1 - 1e-12)


def test_rates_zero_cases(scn, radii):
    none = scn.with_value("deployment.lambda_B", 0.0)
    assert dynamics.blockage_rates(none, radii) == (0.0, 0.0)
    assert dynamics.blockage_rates(none.with_value("association", "A2"), radii) == (0.0, 0.0)
    for lam in (0.1, 1.0):
        nu, nu_B = dynamics.blockage_rates(scn.with_value("deployment.lambda_B", lam), radii)
        assert nu > 0 and nu_B == 0.0


def _spatial_mc(scn, lo, hi, outer, bs_h, n, rng):
    x = outer * np.sqrt(rng.random(n)) if lo == 0 else None
    if x is None:
        x = np.sqrt(lo ** 2 + (hi ** 2 - lo ** 2) * rng.random(n))
        return float(np.mean(dynamics.state_change_rate(x, bs_h, scn)))
    return float(np.mean(dynamics.state_change_rate(x, bs_h, scn) * (x >= hi)))


def test_rates_vs_spatial_sampling(scn, radii):
    s = scn.with_value("association", "A2")
    nu, nu_B = dynamics.blockage_rates(s, radii)
    rng = np.random.default_rng(8)
    # THz: UEs uniform in the A2 disc, only those beyond the A1 radius count
    x = radii.r_T_A2 * np.sqrt(rng.random(1_000_000))
    mc_B = np.mean(dynamics.state_change_rate(x, 10.0, s) * (x > radii.r_T_A1))
    assert nu_B == pytest.approx(mc_B, rel=5e-3)
    d_min = s.deployment.d_min
    x = np.sqrt(d_min ** 2 + (radii.r_M ** 2 - d_min ** 2) * rng.random(1_000_000))
    assert nu == pytest.approx(np.mean(dynamics.state_change_rate(x, 10.0, s)), rel=5e-3)


@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.0, 1.5), dl=st.floats(0.01, 0.4), vb=st.floats(0.2, 3), dv=st.floats(0.01, 1))
def test_rates_monotone(lam, dl, vb, dv):
    # monotone in lambda_B while alpha * t0 <= 1, i.e. 3.2 lambda_B r_B^2 <= 1 at h_B = h_U
    base = default_scenario().with_value("association", "A2")
    radii = radio.coverage_radii(base)
    s = base.with_value("deployment.lambda_B", lam).with_value("deployment.v_B", vb)
    a = dynamics.blockage_rates(s, radii)
    b = dynamics.blockage_rates(s.with_value("deployment.lambda_B", lam + dl), radii)
    c = dynamics.blockage_rates(s.with_value("deployment.v_B", vb + dv), radii)
    assert b[0] >= a[0] and b[1] >= a[1]
    assert c[0] >= a[0] and c[1] >= a[1]


def test_toggle_rate_saturates_at_high_density(scn, radii):
    # 1/(E[up] + E[down]) = alpha e^{-alpha t0} peaks at alpha t0 = 1
    rates = [dynamics.blockage_rates(scn.with_value("deployment.lambda_B", lam), radii)[0]
             for lam in (1.0, 2.0, 4.0, 8.0)]
    assert rates[-1] < max(rates)


MATRIX = [unit_mm(), unit_mm(3.0, 0.3), default_scenario().micromobility,
          MicromobilityParams(mu_x=-2, sigma_x=0.5, mu_y=1, sigma_y=2, mu_phi=4, sigma_phi=1.5,
                              mu_theta=0, sigma_theta=0.2)]


@pytest.mark.parametrize("mm", MATRIX)
def test_outage_pdf_normalized(mm):
    f = lambda u: float(dynamics.time_to_outage_pdf(math.exp(u), mm)) * math.exp(u)
    pts = sorted({m for m, _ in dynamics._axes(mm)})
    lo, hi = min(pts) - 40, max(pts) + 40
    v, _ = integrate.quad(f, lo, hi, points=pts, limit=400, epsabs=1e-12)
    assert v == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("mm", MATRIX)
def test_outage_pdf_nonnegative(mm):
    t = np.geomspace(1e-6, 1e6, 10_000)
    assert np.all(dynamics.time_to_outage_pdf(t, mm) >= 0)


def test_outage_pdf_domain():
    with pytest.raises(DomainError):
        dynamics.time_to_outage_pdf(0.0, unit_mm())


def test_outage_pdf_vs_min_of_lognormals():
    mm = unit_mm()
    rng = np.random.default_rng(21)
    grid = np.geomspace(1e-3, 30.0, 300)
    below, n = np.zeros(grid.size), 0
    for _ in range(10):
        t = np.sort(sample_min_lognormal([0.0] * 4, [1.0] * 4, 1_000_000, rng))
        below += np.searchsorted(t, grid)
        n += t.size
    # model cdf by integrating the pdf itself
    f = lambda u: float(dynamics.time_to_outage_pdf(math.exp(u), mm)) * math.exp(u)
    cdf, acc, prev = [], 0.0, -30.0
    for g in np.log(grid):
        acc += integrate.quad(f, prev, g, epsabs=1e-13)[0]
        cdf.append(acc)
        prev = g
    assert np.max(np.abs(np.array(cdf) - below / n)) <= 0.003


def test_on_demand_fraction():
    mm = unit_mm()
    assert dynamics.outage_fraction_on_demand(mm, 1e-9) == pytest.approx(0.0, abs=1e-8)
    assert dynamics.outage_fraction_on_demand(mm, 1e9) == pytest.approx(1.0, abs=1e-8)
    rng = np.random.default_rng(4)
    mc = np.mean([np.mean(1.0 / (sample_min_lognormal([0.0] * 4, [1.0] * 4, 1_000_000, rng) + 1.0))
                  for _ in range(10)])
    assert dynamics.outage_fraction_on_demand(mm, 1.0) == pytest.approx(mc, abs=1e-3)
    with pytest.raises(DomainError):
        dynamics.outage_fraction_on_demand(mm, 0.0)


@settings(max_examples=30, deadline=None)
@given(t1=st.floats(1e-5, 10), t2=st.floats(1e-5, 10))
def test_on_demand_monotone_in_alignment_time(t1, t2):
    mm = default_scenario().micromobility
    lo, hi = sorted((t1, t2))
    assert (dynamics.outage_fraction_on_demand(mm, lo)
            <= dynamics.outage_fraction_on_demand(mm, hi) + 1e-12)


def test_periodic_fraction_limits():
    mm = unit_mm()
    assert dynamics.outage_fraction_periodic(mm, 0.5, 1e-9) == pytest.approx(1.0, abs=1e-6)
    late = unit_mm(10.0, 0.01)
    assert dynamics.outage_fraction_periodic(late, 0.5, 1.0) == pytest.approx(0.5 / 1.5, rel=1e-9)
    with pytest.raises(DomainError):
        dynamics.outage_fraction_periodic(mm, 0.5, 0.0)


def test_periodic_fraction_shape_in_interval():
    # before the outage mass, only realignment costs time: T_B / (T_U + T_B), falling in T_U
    late = unit_mm(8.0, 0.3)
    vals = [dynamics.outage_fraction_periodic(late, 0.5, tu) for tu in np.geomspace(1e-3, 50, 12)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    # past it the link sits dead until the next scheduled realignment, so the fraction climbs to 1
    mm = unit_mm()
    vals = [dynamics.outage_fraction_periodic(mm, 0.5, tu) for tu in np.geomspace(100, 1e5, 10)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("T_B,T_U", [(0.5, 1.0), (0.05, 3.0)])
def test_periodic_vs_renewal(T_B, T_U):
    mm = unit_mm()
    T_A = sample_min_lognormal([0.0] * 4, [1.0] * 4, 1_000_000, np.random.default_rng(9))
    frac, rate = renewal_periodic(T_A, T_B, T_U)
    assert dynamics.outage_fraction_periodic(mm, T_B, T_U) == pytest.approx(frac, abs=2e-3)
    s = replace(default_scenario(), micromobility=mm)
    s = s.with_value("traffic.T_U", T_U).with_value("traffic.alignment_mode", "periodic")
    assert dynamics.micromobility_rate(s, T_B) == pytest.approx(rate, rel=0.01)


def test_on_demand_rate_is_fraction_over_alignment(scn):
    T_B = 1 / 1800
    # pick a common lognormal scale giving p_O1 = 0.01 exactly
    g = lambda mu: dynamics.outage_fraction_on_demand(unit_mm(mu, 0.05), T_B) - 0.01
    mu = optimize.brentq(g, -10, 5, xtol=1e-14)
    s = replace(scn, micromobility=unit_mm(mu, 0.05))
    assert dynamics.micromobility_rate(s, T_B) == pytest.approx(18.0, rel=1e-9)
    r = dynamics.event_rates(scn, radio.coverage_radii(scn))
    assert r.nu_M == pytest.approx(r.p_O1 / r.T_B, rel=1e-12)
    never = replace(scn, micromobility=unit_mm(300.0, 0.1))
    assert dynamics.micromobility_rate(never, T_B) == pytest.approx(0.0, abs=1e-12)


def test_default_event_rates(scn, radii):
    r = dynamics.event_rates(scn, radii)
    assert r.T_B == pytest.approx(1 / 1800)
    assert 0 <= r.p_O1 <= 1 and r.nu >= 0 and r.nu_B == 0 and r.nu_M >= 0
    assert math.isnan(r.p_O2)


def test_micromobility_defaults_reproducible(scn, radii):
    m = scn.micromobility
    d = dynamics.derive_micromobility(scn.antenna, m.delta_xy, m.delta_angle, 2 / 3 * radii.r_T_A1)
    for k, v in d.items():
        assert getattr(m, k) == pytest.approx(v, rel=1e-12)


def test_standard_exit_time_series():
    # both series branches agree where they hand over, and the law is proper
    t = 0.3
    hi = 4 / math.pi * sum((-1) ** k / (2 * k + 1) * math.exp(-(2 * k + 1) ** 2 * math.pi ** 2 * t / 8)
                           for k in range(60))
    assert dynamics._std_exit_sf(t - 1e-12) == pytest.approx(hi, abs=1e-10)
    mass, _ = integrate.quad(dynamics._std_exit_pdf, 0, 50, points=[0.3], limit=200)
    assert mass == pytest.approx(1.0, abs=1e-9)
    # E[tau] = 1 for exit of standard BM from (-1, 1)
    m1, _ = integrate.quad(lambda x: x * dynamics._std_exit_pdf(x), 0, 80, points=[0.3], limit=200)
    assert m1 == pytest.approx(1.0, abs=1e-8)


def test_with_drift_reproduces_defaults_and_scales(scn):
    same = dynamics.with_drift(scn)
    for k in ("mu_x", "mu_y", "mu_phi", "mu_theta", "sigma_phi"):
        assert getattr(same.micromobility, k) == pytest.approx(getattr(scn.micromobility, k), rel=1e-12)
    # exit time scales as (width / drift)^2, so doubling the drift shifts mu by -2 ln 2
    fast = dynamics.with_drift(scn, delta_angle=0.2)
    assert fast.micromobility.mu_phi == pytest.approx(scn.micromobility.mu_phi - 2 * math.log(2))
    assert fast.micromobility.mu_x == scn.micromobility.mu_x
