"""Link budgets for the mmWave and THz tiers.

SINR is ``P G_B G_U y^-zeta / (A (N + I))`` with ``A = f_GHz^2 * 10^3.24``
(the UMi street-canyon intercept), a per-state exponent and, for THz, an
extra Beer-Lambert factor ``exp(-K y)``.  The noise floor is the total
receiver noise in dBm; the interference margin multiplies it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError, InfeasibleLinkError

_HALF_POWER_ARG = 2.782  # N*pi*cos(theta)/2 at the -3 dB point of sin(Nx)/sin(x)


class LinkState(enum.Enum):
    LosNonBlocked = 1
    LosBlocked = 2


@dataclass(frozen=True)
class CoverageRadii:
    r_M: float
    r_T_A1: float
    r_T_A2: float


def _three_db_cosines(n):
    c = _HALF_POWER_ARG / (n * math.pi)
    if c > 1:
        raise DomainError(f"no half-power points for n_elements={n}")
    return c


def _array_factor(theta, n):
    u = math.pi * np.cos(theta) / 2.0
    den = np.sin(u)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.sin(n * u) / den
    return np.where(np.abs(den) < 1e-12, float(n), val)


@lru_cache(maxsize=256)
def array_gain(n_elements):
    """Mean array-factor gain of an n-element array over its half-power beam."""
    n = int(n_elements)
    if n < 1:
        raise DomainError("n_elements must be >= 1")
    if n == 1:
        return 1.0
    c = _three_db_cosines(n)
    lo, hi = math.acos(c), math.acos(-c)
    val, _ = integrate.quad(lambda t: float(_array_factor(t, n)), lo, hi,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val / (hi - lo)


def hpbw_degrees(n_elements, approx=False):
    """Half-power beamwidth; `approx=True` gives the 102/N rule of thumb.

    The exact branch measures the beam between the two -3 dB points around
    broadside (theta = 90 deg), i.e. 2*arcsin(2.782/(N pi)).
    """
    n = int(n_elements)
    if n < 1:
        raise DomainError("n_elements must be >= 1")
    if approx:
        return 102.0 / n
    c = _three_db_cosines(n)
    return math.degrees(math.acos(-c) - math.acos(c))


def propagation_coefficient(f_ghz):
    return 10.0 ** (2.0 * math.log10(f_ghz) + 3.24)


def _db_to_lin(x):
    return 10.0 ** (x / 10.0)


def noise_plus_interference(scn, band="M"):
    """Noise floor in W scaled by the band's interference margin."""
    r = scn.radio
    margin = r.M_M_I if band == "M" else r.M_T_I
    return _db_to_lin(r.N0 - 30.0) * _db_to_lin(margin)


def _gain_pair(scn, band):
    a = scn.antenna
    if band == "M":
        return array_gain(a.M_B[0] * a.M_B[1]), array_gain(a.M_U[0] * a.M_U[1])
    return array_gain(a.T_B[0] * a.T_B[1]), array_gain(a.T_U[0] * a.T_U[1])


def budget_constant(scn, band="M"):
    """C = P G_B G_U / (A (N + I)); SINR = C y^-zeta (times absorption for THz)."""
    r = scn.radio
    gb, gu = _gain_pair(scn, band)
    if band == "M":
        p, f = r.P_M, r.f_M_c
    else:
        p, f = r.P_T, r.f_T_c
    return p * gb * gu / (propagation_coefficient(f) * noise_plus_interference(scn, band))


def path_loss_exponent(scn, state, band="M"):
    r = scn.radio
    blocked = LinkState(state) is LinkState.LosBlocked
    if band == "M":
        return r.zeta_M_2 if blocked else r.zeta_M_1
    return r.zeta_T_2 if blocked else r.zeta_T_1


def blockage_probability(y, bs_height, scn):
    """Probability that the LoS to a UE at 3D distance y is blocked."""
    d = scn.deployment
    dh = abs(bs_height - d.h_U)
    y = np.asarray(y, dtype=float)
    if np.any(y < dh * (1 - 1e-12)):
        raise DomainError("3D distance shorter than the height difference")
    x = np.sqrt(np.maximum(y * y - dh * dh, 0.0))
    expo = 2.0 * d.lambda_B * d.r_B * (x * (d.h_B - d.h_U) / (bs_height - d.h_U) + d.r_B)
    p = -np.expm1(-expo)
    return float(p) if p.ndim == 0 else p


def sinr_mmwave(y, state, scn):
    y = np.asarray(y, dtype=float)
    out = budget_constant(scn, "M") * y ** (-path_loss_exponent(scn, state, "M"))
    return float(out) if out.ndim == 0 else out


def sinr_thz(y, state, scn):
    y = np.asarray(y, dtype=float)
    zeta = path_loss_exponent(scn, state, "T")
    out = budget_constant(scn, "T") * np.exp(-scn.radio.K_abs * y) * y ** (-zeta)
    return float(out) if out.ndim == 0 else out


def shadow_margin(p_out, sigma):
    """Shadow-fading margin (dB) leaving a fraction p_out of cell-edge UEs in outage."""
    if not 0 < p_out < 1:
        raise DomainError("p_out must lie in (0, 1)")
    return math.sqrt(2.0) * sigma * float(special.erfcinv(2.0 * p_out))


def min_threshold_db(scn):
    return scn.radio.S_min_table[0][0]


def _solve_radius(C, zeta, K, target, dh):
    """Largest 2D distance with C e^{-K y} y^-zeta >= target (y 3D distance)."""
    g = lambda y: math.log(C) - K * y - zeta * math.log(y) - math.log(target)
    if g(dh) < 0:
        raise InfeasibleLinkError("link budget does not close even directly under the BS")
    if K == 0:
        y = (C / target) ** (1.0 / zeta)
    else:
        hi = max(2.0 * dh, 1.0)
        while g(hi) > 0:
            hi *= 2.0
        y = optimize.brentq(g, dh, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.sqrt(max(y * y - dh * dh, 0.0))


def coverage_radii(scn):
    """Cell radii: mmWave and THz/A1 from the blocked budget with shadow margin,
    THz/A2 from the non-blocked budget without it."""
    r, d = scn.radio, scn.deployment
    s_min = _db_to_lin(min_threshold_db(scn))
    m_M = _db_to_lin(shadow_margin(r.p_M_O, r.sigma_M_2))
    m_T = _db_to_lin(shadow_margin(r.p_T_O, r.sigma_T_2))
    cM, cT = budget_constant(scn, "M"), budget_constant(scn, "T")
    r_M = _solve_radius(cM, r.zeta_M_2, 0.0, s_min * m_M, abs(d.h_M_B - d.h_U))
    dhT = abs(d.h_T_B - d.h_U)
    r1 = _solve_radius(cT, r.zeta_T_2, r.K_abs, s_min * m_T, dhT)
    r2 = _solve_radius(cT, r.zeta_T_1, r.K_abs, s_min, dhT)
    if min(r_M, r1, r2) <= 0:
        raise InfeasibleLinkError("zero coverage radius")
    return CoverageRadii(r_M=r_M, r_T_A1=r1, r_T_A2=r2)
