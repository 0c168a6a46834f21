"""Temporal rates: blockage toggling, micromobility outages, beamalignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import DomainError
from .radio import coverage_radii, hpbw_degrees

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
# Fraction of blockers near the LoS zone that enter it per unit time under
# random-direction mobility.
_ENTRY_FRACTION = 0.4


@dataclass(frozen=True)
class EventRates:
    nu: float
    nu_B: float
    nu_M: float
    T_B: float
    p_O1: float
    p_O2: float


def beamalignment_time(antenna):
    """Exhaustive sector scan on both sides: (N_BS + N_UE) * delta."""
    nb = antenna.T_B[0] * antenna.T_B[1]
    nu = antenna.T_U[0] * antenna.T_U[1]
    return (nb + nu) * antenna.delta


# ------------------------------------------------------------------ blockage

def blocker_zone_rate(x, bs_height, scn):
    """Rate (1/s) at which blockers enter the LoS blockage zone of a UE at 2D distance x."""
    d = scn.deployment
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("2D distance must be >= 0")
    perimeter = 4.0 * d.r_B + 2.0 * x * (d.h_B - d.h_U) / (bs_height - d.h_U)
    out = _ENTRY_FRACTION * d.lambda_B * d.v_B * perimeter
    return float(out) if out.ndim == 0 else out


def _residence(scn):
    return 2.0 * scn.deployment.r_B / scn.deployment.v_B


def mean_blocked_period(x, bs_height, scn):
    """Mean M/M/inf busy period with arrival rate alpha(x) and mean service 2 r_B / v_B."""
    a = np.asarray(blocker_zone_rate(x, bs_height, scn), dtype=float)
    t0 = _residence(scn)
    safe = np.where(a > 0, a, 1.0)
    out = np.where(a > 0, np.expm1(safe * t0) / safe, t0)
    return float(out) if out.ndim == 0 else out


def state_change_rate(x, bs_height, scn):
    """Per-position toggle rate 1/(E[non-blocked] + E[blocked]) = alpha exp(-alpha t0)."""
    a = np.asarray(blocker_zone_rate(x, bs_height, scn), dtype=float)
    out = a * np.exp(-a * _residence(scn))
    return float(out) if out.ndim == 0 else out


def _disc_average(fn, lo, hi, outer, tol):
    """(1/outer^2) * int_lo^hi fn(x) 2x dx."""
    if hi <= lo:
        return 0.0
    val, _ = integrate.quad(lambda x: fn(x) * 2.0 * x, lo, hi, epsabs=0.0, epsrel=tol, limit=200)
    return val / (outer * outer)


def blockage_rates(scn, radii, r_T_inner=None, r_T_outer=None):
    """(nu, nu_B): mmWave reallocation rate and THz blockage-outage rate per session.

    nu averages the toggle rate over UEs uniform in the annulus [d_min, r_M].
    nu_B is the per-session rate at a THz node whose UEs are uniform in the
    disc of radius r_T_outer; only those beyond r_T_inner (the blocked-budget
    radius) lose the link when blocked.  Under A1 the two radii coincide.
    """
    d, tol = scn.deployment, max(scn.solver.quad_tol, 1e-13)
    if d.lambda_B == 0:
        return 0.0, 0.0
    lo = min(d.d_min, radii.r_M)
    f_m = lambda x: state_change_rate(x, d.h_M_B, scn)
    nu = _disc_average(f_m, lo, radii.r_M, 1.0, tol) / (radii.r_M ** 2 - lo ** 2)
    if scn.association == "A1":
        return nu, 0.0
    r_in = radii.r_T_A1 if r_T_inner is None else r_T_inner
    r_out = radii.r_T_A2 if r_T_outer is None else r_T_outer
    f_t = lambda x: state_change_rate(x, d.h_T_B, scn)
    nu_B = _disc_average(f_t, r_in, r_out, r_out, tol)
    return nu, nu_B


# ------------------------------------------------------------ micromobility

def _axes(mm):
    return ((mm.mu_x, mm.sigma_x), (mm.mu_y, mm.sigma_y),
            (mm.mu_phi, mm.sigma_phi), (mm.mu_theta, mm.sigma_theta))


def _log_pdf_sf(logt, mu, sigma):
    z = (logt - mu) / sigma
    dens = np.exp(-0.5 * z * z) / (sigma * _SQRT2PI)  # density of log T
    sf = 0.5 * special.erfc(z / _SQRT2)
    return dens, sf


def time_to_outage_sf(t, mm):
    """P(T_A > t) for T_A the first of four independent lognormal exit times."""
    t = np.asarray(t, dtype=float)
    logt = np.log(np.where(t > 0, t, 1.0))
    out = np.ones_like(logt)
    for mu, s in _axes(mm):
        out = out * _log_pdf_sf(logt, mu, s)[1]
    out = np.where(t > 0, out, 1.0)
    return float(out) if out.ndim == 0 else out


def _log_density(u, mm):
    """Density of log T_A at u: sum_i g_i(u) prod_{j != i} S_j(u)."""
    parts = [_log_pdf_sf(u, mu, s) for mu, s in _axes(mm)]
    total = np.zeros_like(np.asarray(u, dtype=float))
    for i, (g, _) in enumerate(parts):
        term = g
        for j, (_, sf) in enumerate(parts):
            if j != i:
                term = term * sf
        total = total + term
    return total


def time_to_outage_pdf(t, mm):
    """Density of the time to outage, the minimum of the four axis exit times."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t must be > 0")
    out = _log_density(np.log(t), mm) / t
    return float(out) if out.ndim == 0 else out


def _log_support(mm, width=14.0):
    axes = _axes(mm)
    lo = min(mu - width * s for mu, s in axes)
    hi = max(mu + width * s for mu, s in axes)
    pts = sorted({mu for mu, _ in axes})
    return lo, hi, pts


def _expect_log(fn, mm, upper_log=None, tol=1e-12):
    """E[fn(T_A); T_A < e^upper_log] integrating over u = log t."""
    lo, hi, pts = _log_support(mm)
    if upper_log is not None:
        hi = min(hi, upper_log)
        if hi <= lo:
            return 0.0
    pts = [p for p in pts if lo < p < hi]
    val, _ = integrate.quad(lambda u: fn(math.exp(u)) * float(_log_density(u, mm)),
                            lo, hi, points=pts or None, epsabs=0.0, epsrel=tol, limit=400)
    return val


def time_to_outage_cdf(t, mm):
    return 1.0 - time_to_outage_sf(t, mm)


def outage_fraction_on_demand(mm, T_B):
    """Long-run outage fraction when realignment (length T_B) starts at each outage."""
    if T_B <= 0:
        raise DomainError("T_B must be > 0")
    return _expect_log(lambda t: T_B / (t + T_B), mm)


def outage_fraction_periodic(mm, T_B, T_U):
    """Outage fraction with realignment every T_U seconds."""
    if T_U <= 0:
        raise DomainError("T_U must be > 0")
    tail = time_to_outage_sf(T_U, mm)
    body = _expect_log(lambda t: (T_U + T_B - t) / (T_U + T_B), mm, upper_log=math.log(T_U))
    return T_B * tail / (T_U + T_B) + body


def micromobility_rate(scn, T_B):
    """nu_M, the per-session rate of micromobility-induced outages at a THz BS."""
    mm, tr = scn.micromobility, scn.traffic
    if tr.alignment_mode == "on-demand":
        return outage_fraction_on_demand(mm, T_B) / T_B
    T_U = tr.T_U
    num = outage_fraction_periodic(mm, T_B, T_U)
    den = (_expect_log(lambda t: T_U + T_B - t, mm, upper_log=math.log(T_U))
           + time_to_outage_sf(T_U, mm) * T_B)
    return num / den


# ------------------------------------------------- micromobility defaults

def _std_exit_sf(t):
    """P(tau > t), tau the exit time of standard Brownian motion from (-1, 1)."""
    if t <= 0:
        return 1.0
    if t < 0.3:
        # image series, accurate for small t
        s = 0.0
        for k in range(0, 8):
            s += (-1) ** k * special.erfc((2 * k + 1) / math.sqrt(2 * t))
        return 1.0 - 2.0 * s
    s = 0.0
    for k in range(0, 60):
        m = 2 * k + 1
        s += (-1) ** k / m * math.exp(-m * m * math.pi ** 2 * t / 8.0)
    return 4.0 / math.pi * s


def _std_exit_pdf(t):
    if t <= 0:
        return 0.0
    if t < 0.3:
        s = 0.0
        for k in range(0, 8):
            m = 2 * k + 1
            s += (-1) ** k * m * math.exp(-m * m / (2 * t))
        return 2.0 * s / math.sqrt(2 * math.pi * t ** 3)
    s = 0.0
    for k in range(0, 60):
        m = 2 * k + 1
        s += (-1) ** k * m * math.exp(-m * m * math.pi ** 2 * t / 8.0)
    return math.pi / 2.0 * s


@lru_cache(maxsize=1)
def standard_exit_log_moments():
    """Mean and std of log(tau) for the unit exit problem."""
    f = lambda u: _std_exit_pdf(math.exp(u)) * math.exp(u)
    lo, hi = -6.0, 6.0
    m0, _ = integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-13, limit=400, points=[-1.0, 0.0])
    m1, _ = integrate.quad(lambda u: u * f(u), lo, hi, epsabs=0, epsrel=1e-13, limit=400,
                           points=[-1.0, 0.0])
    m2, _ = integrate.quad(lambda u: u * u * f(u), lo, hi, epsabs=0, epsrel=1e-13, limit=400,
                           points=[-1.0, 0.0])
    mean = m1 / m0
    return mean, math.sqrt(m2 / m0 - mean * mean)


def exit_time_lognormal(half_width, drift):
    """Lognormal (mu, sigma) matching log of the exit time of a Brownian path
    with scale `drift` per sqrt(s) from (-half_width, half_width)."""
    if half_width <= 0 or drift <= 0:
        raise DomainError("half_width and drift must be > 0")
    m, s = standard_exit_log_moments()
    return 2.0 * math.log(half_width / drift) + m, s


def derive_micromobility(antenna, delta_xy, delta_angle, ref_distance):
    """Per-axis lognormal parameters from beamwidths and drift magnitudes.

    Yaw/pitch rotate the UE beam out of its horizontal/vertical half-power
    cone; lateral/vertical displacement moves the UE out of the BS beam
    footprint at `ref_distance` metres.
    """
    ue_v, ue_h = antenna.T_U
    bs_v, bs_h = antenna.T_B
    half = lambda n: math.radians(hpbw_degrees(n)) / 2.0
    mu_phi, s_phi = exit_time_lognormal(math.degrees(half(ue_h)), delta_angle)
    mu_theta, s_theta = exit_time_lognormal(math.degrees(half(ue_v)), delta_angle)
    mu_x, s_x = exit_time_lognormal(ref_distance * math.tan(half(bs_h)), delta_xy)
    mu_y, s_y = exit_time_lognormal(ref_distance * math.tan(half(bs_v)), delta_xy)
    return dict(mu_x=mu_x, sigma_x=s_x, mu_y=mu_y, sigma_y=s_y,
                mu_phi=mu_phi, sigma_phi=s_phi, mu_theta=mu_theta, sigma_theta=s_theta)


def with_drift(scn, delta_angle=None, delta_xy=None):
    """Scenario copy with the micromobility lognormals re-derived for new drifts.

    The reference distance is the mean UE distance in the A1 THz cell, the
    same one used for the shipped defaults.
    """
    m = scn.micromobility
    da = m.delta_angle if delta_angle is None else delta_angle
    dxy = m.delta_xy if delta_xy is None else delta_xy
    ref = 2.0 / 3.0 * coverage_radii(scn).r_T_A1
    fit = derive_micromobility(scn.antenna, dxy, da, ref)
    return replace(scn, micromobility=replace(m, delta_angle=da, delta_xy=dxy, **fit))


def sample_time_to_outage(mm, size, rng):
    """Draw T_A directly as the minimum of four lognormals."""
    draws = [np.exp(rng.normal(mu, s, size)) for mu, s in _axes(mm)]
    return np.minimum.reduce(draws)


def event_rates(scn, radii, r_T_inner=None, r_T_outer=None):
    T_B = beamalignment_time(scn.antenna)
    nu, nu_B = blockage_rates(scn, radii, r_T_inner, r_T_outer)
    mm = scn.micromobility
    p1 = outage_fraction_on_demand(mm, T_B)
    p2 = (outage_fraction_periodic(mm, T_B, scn.traffic.T_U)
          if scn.traffic.T_U is not None else float("nan"))
    return EventRates(nu=nu, nu_B=nu_B, nu_M=micromobility_rate(scn, T_B), T_B=T_B,
                      p_O1=p1, p_O2=p2)
