"""PRB demand pmfs of sessions served by the mmWave BS.

A session's SINR is fixed by its distance and blockage state; the lowest
MCS whose threshold it clears sets its spectral efficiency and hence the
number of PRBs needed for the requested rate.  Two populations exist:
UEs uniform in the mmWave disc (native), and UEs of THz cells rerouted
to the mmWave BS, whose distance is that of a point uniform in a THz disc
whose centre is uniform in the mmWave disc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import radio
from .errors import DomainError
from .radio import LinkState


@dataclass(frozen=True)
class ResourcePmf:
    """probs[r] = P(demand = r PRBs); `infeasible` is mass below the lowest MCS."""

    probs: np.ndarray
    infeasible: float = 0.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < -1e-15) or self.infeasible < -1e-15:
            raise DomainError("pmf entries must be nonnegative")
        object.__setattr__(self, "probs", p)

    @property
    def total(self):
        return float(self.probs.sum()) + float(self.infeasible)

    def mean(self):
        """Mean of the feasible part."""
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    def truncated(self, R):
        """Entries 0..R plus all mass that can never fit into R PRBs."""
        head = np.zeros(R + 1)
        n = min(len(self.probs), R + 1)
        head[:n] = self.probs[:n]
        beyond = float(self.probs[R + 1:].sum()) + float(self.infeasible)
        return head, beyond

    @classmethod
    def point(cls, r):
        p = np.zeros(r + 1)
        p[r] = 1.0
        return cls(p)


@dataclass(frozen=True)
class SinrCdf:
    """CDF of linear SINR at the mmWave BS for one UE population."""

    fn: object
    lower: float
    upper: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.array([self.fn(float(v)) for v in s.ravel()]).reshape(s.shape)
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------ geometry

def distance_cdf_native(y, r_M, h_bs, h_u):
    """CDF of the 3D distance of a UE uniform in the disc of radius r_M."""
    dh = abs(h_bs - h_u)
    q = math.sqrt(r_M * r_M + dh * dh)
    y = np.asarray(y, dtype=float)
    if np.any(y < dh * (1 - 1e-12)) or np.any(y > q * (1 + 1e-12)):
        raise DomainError("distance outside [|h_BS - h_U|, Q]")
    out = np.clip((y * y - dh * dh) / (r_M * r_M), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _breakpoint(C, zeta, s, dh):
    """2D distance beyond which C y^-zeta < s."""
    y = (C / s) ** (1.0 / zeta)
    return math.sqrt(y * y - dh * dh) if y > dh else 0.0


def _blocking_coeffs(scn, h_bs):
    d = scn.deployment
    a = 2.0 * d.lambda_B * d.r_B
    b = a * (d.h_B - d.h_U) / (h_bs - d.h_U)  # slope in the 2D distance
    return a * d.r_B, b


def _int_x_exp(lo, hi, b):
    """int_lo^hi x exp(-b x) dx."""
    if hi <= lo:
        return 0.0
    if b * hi < 1e-6:
        # series for small b
        return (hi ** 2 - lo ** 2) / 2 - b * (hi ** 3 - lo ** 3) / 3 + b * b * (hi ** 4 - lo ** 4) / 8
    F = lambda x: -math.exp(-b * x) * (b * x + 1.0) / (b * b)
    return F(hi) - F(lo)


def _native_masses(scn, x_lo, x_hi, r_M):
    """(non-blocked, blocked) probability mass of a uniform-disc UE with x in [x_lo, x_hi]."""
    x_lo, x_hi = max(x_lo, 0.0), min(x_hi, r_M)
    if x_hi <= x_lo:
        return 0.0, 0.0
    c0, b = _blocking_coeffs(scn, scn.deployment.h_M_B)
    total = (x_hi ** 2 - x_lo ** 2) / r_M ** 2
    nonblocked = 2.0 * math.exp(-c0) * _int_x_exp(x_lo, x_hi, b) / r_M ** 2
    return nonblocked, total - nonblocked


def sinr_cdf_native(scn, r_M):
    """Mixture SINR CDF over UEs uniform in the mmWave disc."""
    d = scn.deployment
    dh = abs(d.h_M_B - d.h_U)
    C = radio.budget_constant(scn, "M")
    z1 = radio.path_loss_exponent(scn, LinkState.LosNonBlocked, "M")
    z2 = radio.path_loss_exponent(scn, LinkState.LosBlocked, "M")

    def F(s):
        if s <= 0:
            return 0.0
        x1, x2 = _breakpoint(C, z1, s, dh), _breakpoint(C, z2, s, dh)
        nb, _ = _native_masses(scn, x1, r_M, r_M)
        _, bl = _native_masses(scn, x2, r_M, r_M)
        return nb + bl

    q = math.sqrt(r_M ** 2 + dh ** 2)
    return SinrCdf(F, C * q ** (-max(z1, z2)), C * dh ** (-min(z1, z2)))


def _lens_area(d, R, r):
    """Area of the intersection of discs of radii R and r with centres d apart."""
    if d >= R + r:
        return 0.0
    if d <= abs(R - r):
        return math.pi * min(R, r) ** 2
    c1 = (d * d + R * R - r * r) / (2 * d * R)
    c2 = (d * d + r * r - R * R) / (2 * d * r)
    c1, c2 = min(1.0, max(-1.0, c1)), min(1.0, max(-1.0, c2))
    k = (-d + r + R) * (d + r - R) * (d - r + R) * (d + r + R)
    return R * R * math.acos(c1) + r * r * math.acos(c2) - 0.5 * math.sqrt(max(k, 0.0))


def rerouted_distance_pdf(r_M, r_T):
    """pdf of the 2D distance from the mmWave BS to a UE of a THz cell.

    The UE is uniform in a disc of radius r_T centred at a point uniform in
    the disc of radius r_M, so its position density is the normalized
    intersection area of the two discs; the radial pdf follows in closed form.
    """
    if r_T < 0 or r_T > r_M:
        raise DomainError("need 0 <= r_T <= r_M")
    if r_T == 0:
        return lambda d: 2.0 * d / r_M ** 2 if 0 <= d <= r_M else 0.0
    norm = math.pi * r_M ** 2 * math.pi * r_T ** 2

    def pdf(d):
        if d < 0 or d > r_M + r_T:
            return 0.0
        return 2.0 * math.pi * d * _lens_area(d, r_M, r_T) / norm

    return pdf


def _rerouted_support(r_M, r_T):
    return r_M + r_T, sorted({r_M - r_T, r_M, r_M + r_T})


def sinr_cdf_rerouted(scn, r_M, r_T):
    """Mixture SINR CDF (at the mmWave BS) of UEs belonging to THz cells."""
    d = scn.deployment
    if r_T == 0:
        return sinr_cdf_native(scn, r_M)
    dh = abs(d.h_M_B - d.h_U)
    C = radio.budget_constant(scn, "M")
    z1 = radio.path_loss_exponent(scn, LinkState.LosNonBlocked, "M")
    z2 = radio.path_loss_exponent(scn, LinkState.LosBlocked, "M")
    pdf = rerouted_distance_pdf(r_M, r_T)
    c0, b = _blocking_coeffs(scn, d.h_M_B)
    top, kinks = _rerouted_support(r_M, r_T)
    tol = max(scn.solver.quad_tol, 1e-13)

    def mass(lo, weight):
        lo = max(lo, 0.0)
        if lo >= top:
            return 0.0
        pts = [k for k in kinks if lo < k < top]
        v, _ = integrate.quad(lambda x: pdf(x) * weight(x), lo, top, points=pts or None,
                              epsabs=1e-15, epsrel=tol, limit=400)
        return v

    def F(s):
        if s <= 0:
            return 0.0
        x1, x2 = _breakpoint(C, z1, s, dh), _breakpoint(C, z2, s, dh)
        nb = mass(x1, lambda x: math.exp(-c0 - b * x))
        bl = mass(x2, lambda x: -math.expm1(-c0 - b * x))
        return nb + bl

    return SinrCdf(F, 0.0, C * dh ** (-min(z1, z2)))


# --------------------------------------------------------------- MCS -> PRB

def mcs_split(cdf, thresholds_db):
    """Probabilities of each MCS (eps_1..eps_J) and of SINR below the lowest one."""
    th = np.asarray(thresholds_db, dtype=float)
    if np.any(np.diff(th) <= 0):
        raise DomainError("thresholds must be strictly increasing")
    F = np.array([cdf(10.0 ** (t / 10.0)) for t in th])
    F = np.maximum.accumulate(F)
    eps = np.empty(len(th))
    eps[:-1] = np.diff(F)
    eps[-1] = 1.0 - F[-1]
    return eps, float(F[0])


def prb_rate(scn):
    """Bit rate carried by one PRB at unit spectral efficiency."""
    r = scn.radio
    return 12.0 * r.subcarrier_spacing * r.prb_overhead


def prbs_per_mcs(scn):
    rate = prb_rate(scn)
    out = []
    for _, se in scn.radio.S_min_table:
        need = scn.traffic.C_rate / (rate * se)
        out.append(max(1, math.ceil(need * (1.0 - 1e-9))))
    return out


def demand_pmf(eps, scn, infeasible=0.0):
    """Merge MCS probabilities into a pmf over PRB counts."""
    eps = np.asarray(eps, dtype=float)
    if eps.sum() + infeasible > 1 + 1e-9:
        raise DomainError("probabilities exceed 1")
    r = prbs_per_mcs(scn)
    probs = np.zeros(max(r) + 1)
    for rj, e in zip(r, eps):
        probs[rj] += e
    return ResourcePmf(probs, float(infeasible))


def demand_pmf_native(scn, radii):
    cdf = sinr_cdf_native(scn, radii.r_M)
    eps, inf = mcs_split(cdf, [t for t, _ in scn.radio.S_min_table])
    return demand_pmf(eps, scn, inf)


def demand_pmf_rerouted(scn, radii, r_T):
    cdf = sinr_cdf_rerouted(scn, radii.r_M, r_T)
    eps, inf = mcs_split(cdf, [t for t, _ in scn.radio.S_min_table])
    return demand_pmf(eps, scn, inf)
