"""Per-strategy node flows, the nested fixed point, and end metrics.

Nodes 1..K are THz BSs with unlimited capacity; node K+1 is the mmWave BS,
a loss system with N servers and R PRBs.  All THz nodes are statistically
identical, so one representative node is solved and scaled by K.

    S1  no rerouting; THz sessions are lost if an outage outlasts T_O
    S2  reroute on blockage; micromobility outages are tolerated
    S3  reroute on blockage; micromobility outages drop the session
    S4  reroute on both blockage and micromobility
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy import optimize

from . import demand, dynamics, radio
from .errors import ConvergenceError, GeometryError, ThzmmError
from .rels import SingleClassSystem, TwoClassSystem, solve_single_class
from .scenario import derived_outage_tolerance, validate


@dataclass(frozen=True)
class NodeFlows:
    lambda_thz: float  # per THz node
    lambda_mmw: float
    gamma_k: float  # returning sessions per THz node
    gamma_Kp1: float  # mmWave re-requests after blockage
    gamma_B: float
    gamma_M: float
    mu: float
    nu: float
    nu_B: float
    nu_M: float
    beta_B: float
    beta_M: float


@dataclass(frozen=True)
class Convergence:
    outer_iterations: int = 0
    inner_iterations: int = 0
    outer_residual: float = 0.0
    inner_residual: float = 0.0


@dataclass(frozen=True)
class StrategyReport:
    association: str
    strategy: str
    pi_N: float
    pi_O: float
    pi_O_mmw: float
    pi_O_thz: float
    utilization: float
    R_bar: float
    N_bar_mmw: float
    N_bar_thz: float
    pi_a2: float
    flows: NodeFlows
    convergence: Convergence = field(default_factory=Convergence)


@dataclass(frozen=True)
class StrategyInputs:
    """Everything the queueing layer needs, derived once from a Scenario."""

    radii: radio.CoverageRadii
    r_T: float  # THz radius actually used
    p_T: float
    lambda_total: float
    lambda_mmw: float
    lambda_thz: float
    pmf1: demand.ResourcePmf
    pmf2: demand.ResourcePmf
    rates: dynamics.EventRates
    T_O: float
    b_k: float
    m_k: float


def association_split(scn, radii):
    """(p_T, lambda_mmw, lambda_thz per node) for the configured association."""
    r_T = effective_thz_radius(scn, radii)
    K = scn.deployment.K_thz
    p_T = K * r_T ** 2 / radii.r_M ** 2
    if p_T > 1.0 + 1e-12:
        raise GeometryError("association_split.p_T",
                            f"K r_T^2 / r_M^2 = {p_T:.4f} > 1; THz cells do not fit")
    if p_T > 1.0 - 1e-12:
        p_T = 1.0  # capped radius: the THz cells tile the whole mmWave disc
    total = scn.traffic.lambda_A * math.pi * radii.r_M ** 2
    return p_T, (1.0 - p_T) * total, p_T * total / K


def effective_thz_radius(scn, radii):
    r_T = radii.r_T_A1 if scn.association == "A1" else radii.r_T_A2
    if scn.deployment.cap_thz_radius:
        r_T = min(r_T, radii.r_M / math.sqrt(scn.deployment.K_thz))
    return r_T


def _tagged(module, fn, *args, **kw):
    """Call fn, stamping any package error with the module it came from."""
    try:
        return fn(*args, **kw)
    except ThzmmError as exc:
        if "module" not in vars(exc):
            exc.module = module
        raise


def build_inputs(scn, radii=None):
    radii = radii or _tagged("radio", radio.coverage_radii, scn)
    p_T, lam_m, lam_k = association_split(scn, radii)
    r_T = effective_thz_radius(scn, radii)
    pmf1 = _tagged("demand", demand.demand_pmf_native, scn, radii)
    pmf2 = _tagged("demand", demand.demand_pmf_rerouted, scn, radii, r_T)
    rates = _tagged("dynamics", dynamics.event_rates, scn, radii,
                    r_T_inner=radii.r_T_A1, r_T_outer=r_T)
    T_O = derived_outage_tolerance(scn, rates.T_B)
    tr = scn.traffic
    b_k = math.exp(-tr.beta_B * T_O)
    if tr.micromobility_duration == "deterministic":
        m_k = 1.0 if rates.T_B >= T_O else 0.0
    else:
        m_k = math.exp(-tr.beta_M * T_O)
    return StrategyInputs(radii=radii, r_T=r_T, p_T=p_T,
                          lambda_total=scn.traffic.lambda_A * math.pi * radii.r_M ** 2,
                          lambda_mmw=lam_m, lambda_thz=lam_k, pmf1=pmf1, pmf2=pmf2,
                          rates=rates, T_O=T_O, b_k=b_k, m_k=m_k)


def _ongoing_mix(lam_m, pi_N, K, lam_k, pi_mmw, pi_thz):
    w_m, w_t = lam_m * (1.0 - pi_N), K * lam_k
    if w_m + w_t == 0:
        return 0.0
    return (w_m * pi_mmw + w_t * pi_thz) / (w_m + w_t)


def _clip01(x):
    return min(max(x, 0.0), 1.0)


# ------------------------------------------------------------------------ S1

def evaluate_s1(scn, inputs, system=None):
    tr, sv = scn.traffic, scn.solver
    ev = inputs.rates
    K, lam_k, lam_m = scn.deployment.K_thz, inputs.lambda_thz, inputs.lambda_mmw
    leave = ev.nu_B * inputs.b_k + ev.nu_M * inputs.m_k
    pi_sk = leave / (tr.mu + leave)
    N_k = lam_k / (tr.mu + leave)

    if lam_m > 0:
        system = system or SingleClassSystem(inputs.pmf1, sv.N_srv, sv.R_prb)
        sol = solve_single_class(lam_m, tr.mu, ev.nu, inputs.pmf1, sv.N_srv, sv.R_prb,
                                 tol=sv.fp_tol, max_iter=sv.fp_max_iter, system=system)
        pi_N, pi_m, N_m, R_bar = sol.pi_N, sol.pi_s, sol.N_bar, sol.R_bar
        conv = Convergence(0, sol.iterations, 0.0, sol.residual)
    else:
        pi_N = pi_m = N_m = R_bar = 0.0
        conv = Convergence()
    flows = NodeFlows(lambda_thz=lam_k, lambda_mmw=lam_m, gamma_k=0.0, gamma_Kp1=N_m * ev.nu,
                      gamma_B=0.0, gamma_M=0.0, mu=tr.mu, nu=ev.nu, nu_B=ev.nu_B,
                      nu_M=ev.nu_M, beta_B=tr.beta_B, beta_M=tr.beta_M)
    pi_O = _ongoing_mix(lam_m, pi_N, K, lam_k, pi_m, pi_sk)
    return StrategyReport(association=scn.association, strategy="S1", pi_N=_clip01(pi_N),
                          pi_O=_clip01(pi_O), pi_O_mmw=_clip01(pi_m), pi_O_thz=_clip01(pi_sk),
                          utilization=R_bar / sv.R_prb, R_bar=R_bar, N_bar_mmw=N_m,
                          N_bar_thz=N_k, pi_a2=0.0, flows=flows, convergence=conv)


# ----------------------------------------------------------------- S2/S3/S4

def _inner_loop(system, lam_m, mu, nu, rho2, tol, max_iter):
    """Solve gamma_{K+1} = N1 nu at fixed rerouted load rho2.

    Little's law gives N1 = rho1 (1 - pi_a1), so with rho1 = (lam + gamma)/(mu + nu)
    the fixed point is rho1 = lam / (mu + nu pi_a1); iterate on pi_a1.
    """
    rho1_of = lambda pi: lam_m / (mu + nu * pi)
    gamma, pi, it = 0.0, 0.0, 0
    while True:
        it += 1
        sol = system.solve(rho1_of(pi), rho2)
        new_gamma = sol.N1_bar * nu
        step = abs(new_gamma - gamma)
        gamma, pi = new_gamma, sol.pi_a1
        if step <= tol * max(1.0, gamma):
            break
        if it >= max_iter:
            # substitution oscillates under heavy load; p - pi_a1(p) is increasing
            g = lambda p: p - system.solve(rho1_of(p), rho2).pi_a1
            try:
                pi = optimize.brentq(g, 0.0, 1.0, xtol=1e-16, rtol=8.9e-16, maxiter=500)
            except ValueError as exc:
                raise ConvergenceError("inner loop on gamma_{K+1}", step, it) from exc
            gamma = system.solve(rho1_of(pi), rho2).N1_bar * nu
            break
    sol = system.solve((lam_m + gamma) / (mu + nu), rho2)
    residual = abs(sol.N1_bar * nu - gamma)
    return sol, gamma, it, residual


def _rerouting(strategy, inputs, mu, nu_B, nu_M, beta_B, beta_M):
    """Return (c, exit rate at THz, micromobility rerouted?) for the strategy.

    c is the per-session rate of sessions that come back (before blocking at
    the mmWave BS): gamma_k = N_k (1 - pi_a2) c.
    """
    cB = nu_B * beta_B / (mu + beta_B)
    if strategy == "S4":
        cM = nu_M * beta_M / (mu + beta_M)
        return cB + cM, mu + nu_B + nu_M, True
    m = 0.0 if strategy == "S2" else 1.0
    return cB, mu + nu_B + nu_M * m, False


def evaluate_rerouting(scn, inputs, strategy, system=None):
    """Nested fixed point for S2, S3 and S4 (γ_M = 0 for S2/S3)."""
    tr, sv = scn.traffic, scn.solver
    ev = inputs.rates
    K, lam_k, lam_m = scn.deployment.K_thz, inputs.lambda_thz, inputs.lambda_mmw
    mu, nu, nu_B, nu_M = tr.mu, ev.nu, ev.nu_B, ev.nu_M
    c, exit_rate, reroute_M = _rerouting(strategy, inputs, mu, nu_B, nu_M, tr.beta_B, tr.beta_M)
    m_k = 0.0 if strategy == "S2" else 1.0
    tol = sv.fp_tol
    system = system or TwoClassSystem(inputs.pmf1, inputs.pmf2, sv.N_srv, sv.R_prb)

    def loads(gamma_k):
        N_k = (lam_k + gamma_k) / exit_rate
        gB = K * N_k * nu_B
        gM = K * N_k * nu_M if reroute_M else 0.0
        return N_k, gB, gM, gB / (mu + tr.beta_B) + gM / (mu + tr.beta_M)

    gamma_k, outer, inner_total = 0.0, 0, 0
    history = []
    while True:
        outer += 1
        N_k, gB, gM, rho2 = loads(gamma_k)
        sol, g1, it, inner_res = _inner_loop(system, lam_m, mu, nu, rho2, tol, sv.fp_max_iter)
        inner_total += it
        # gamma_k solves gamma = (lam_k + gamma) c' with pi_a2 held fixed
        cp = c * (1.0 - sol.pi_a2) / exit_rate
        new_gamma = lam_k * cp / (1.0 - cp)
        change = abs(new_gamma - gamma_k) / max(abs(new_gamma), 1e-300) if new_gamma else abs(gamma_k)
        history.append(change)
        gamma_k = new_gamma
        if change <= tol:
            break
        if outer >= sv.fp_max_iter:
            raise ConvergenceError("outer loop on gamma_k", change, outer,
                                   diagnostics={"outer_history": history,
                                                "inner_iterations": inner_total})

    N_k, gB, gM, rho2 = loads(gamma_k)
    sol, g1, it, inner_res = _inner_loop(system, lam_m, mu, nu, rho2, tol, sv.fp_max_iter)
    inner_total += it
    # flow balance on the returned point
    implied = N_k * (1.0 - sol.pi_a2) * c
    outer_res = abs(implied - gamma_k) / max(gamma_k, 1e-300) if gamma_k else abs(implied)
    rho2_split = (gB / (mu + tr.beta_B), gM / (mu + tr.beta_M))
    sol = system.solve(sol.rho1, sol.rho2, rho2_split)

    pi_N, pi_a2 = sol.pi_a1, sol.pi_a2
    accepted = lam_m * (1.0 - pi_N)
    pi_m = sol.N1_bar * nu * pi_N / accepted if accepted > 0 else 0.0
    if lam_k > 0:
        if strategy == "S4":
            pi_sk = N_k * (nu_B + nu_M) * pi_a2 / lam_k
        else:
            pi_sk = N_k * (nu_B * pi_a2 + nu_M * m_k) / lam_k
    else:
        pi_sk = 0.0
    pi_O = _ongoing_mix(lam_m, pi_N, K, lam_k, pi_m, pi_sk)
    flows = NodeFlows(lambda_thz=lam_k, lambda_mmw=lam_m, gamma_k=gamma_k, gamma_Kp1=g1,
                      gamma_B=gB, gamma_M=gM, mu=mu, nu=nu, nu_B=nu_B, nu_M=nu_M,
                      beta_B=tr.beta_B, beta_M=tr.beta_M)
    conv = Convergence(outer_iterations=outer, inner_iterations=inner_total,
                       outer_residual=outer_res, inner_residual=inner_res)
    return StrategyReport(association=scn.association, strategy=strategy, pi_N=_clip01(pi_N),
                          pi_O=_clip01(pi_O), pi_O_mmw=_clip01(pi_m), pi_O_thz=_clip01(pi_sk),
                          utilization=sol.R_bar / sv.R_prb, R_bar=sol.R_bar,
                          N_bar_mmw=sol.N1_bar + sol.N2_bar, N_bar_thz=N_k, pi_a2=pi_a2,
                          flows=flows, convergence=conv)


def evaluate_s4(scn, inputs, system=None):
    return evaluate_rerouting(scn, inputs, "S4", system)


def evaluate_s2_s3(scn, inputs, outage_sensitive, system=None):
    return evaluate_rerouting(scn, inputs, "S3" if outage_sensitive else "S2", system)


def evaluate(scn, inputs, strategy=None, system=None):
    strategy = strategy or scn.strategy
    if strategy == "S1":
        return evaluate_s1(scn, inputs, system)
    return evaluate_rerouting(scn, inputs, strategy, system)


def run(scn):
    """Full chain radio -> demand -> dynamics -> rels for one Scenario."""
    validate(scn)
    inputs = build_inputs(scn)
    return _tagged("rels", evaluate, scn, inputs)


def run_all(scn, strategies=("S1", "S2", "S3", "S4")):
    """Reports for several strategies sharing one set of inputs and solver tables."""
    validate(scn)
    radii = radio.coverage_radii(scn)
    inputs = build_inputs(scn, radii)
    sv = scn.solver
    two = None
    out = {}
    for s in strategies:
        if s == "S1":
            out[s] = evaluate_s1(scn, inputs)
        else:
            two = two or TwoClassSystem(inputs.pmf1, inputs.pmf2, sv.N_srv, sv.R_prb)
            out[s] = evaluate_rerouting(scn, inputs, s, two)
    return out
