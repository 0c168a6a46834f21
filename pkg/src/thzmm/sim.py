"""Event-driven Monte Carlo of the Markovian THz/mmWave network.

The simulator reproduces the queueing formalization, not the physical
system: every clock is exponential, a session re-draws its PRB demand on
each (re)allocation, and rerouted sessions return to their THz node at rate
beta.  Agreement with the analytical solution is therefore a correctness
check of the solver, not of the modelling assumptions.

Randomness comes from counter-based Philox streams, one per (replication,
clock family), derived from a SeedSequence so that runs are reproducible
bit-for-bit.  The THz nodes are aggregated into one infinite-server pool,
which leaves every reported metric unchanged.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .errors import SimConfigError
from .scenario import validate

RNG_ALGORITHM = "Philox4x64-10"
_N_STREAMS = 4  # event time, event choice, session choice, demand/coin
_BUF = 1 << 15
_STRATEGY_CODE = {"S1": 1, "S2": 2, "S3": 3, "S4": 4}

# trace event kinds
TRACE_KINDS = (
    "mmw_arrival", "mmw_blocked", "mmw_complete", "mmw_redraw", "mmw_redraw_lost",
    "thz_arrival", "thz_complete", "thz_lost_blockage", "thz_tolerated_blockage",
    "reroute_blockage", "reroute_micromobility", "reroute_lost", "thz_lost_micromobility",
    "thz_tolerated_micromobility", "rerouted_complete", "rerouted_return",
)

# counter slots
C_ARR_M, C_ACC_M, C_BLK_M, C_ARR_T, C_LOST_M, C_LOST_T, C_RR_TRY, C_RR_BLK, C_EVENTS = range(9)
# time-integral slots
A_USED, A_N1, A_N2, A_NT, A_BLK1, A_BLK2 = range(6)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    warmup: float | None = None  # None -> 10 / mu
    horizon: float | None = None  # None -> 1e4 / mu
    replications: int = 20
    trace_path: str | None = None

    def resolved(self, mu):
        w = 10.0 / mu if self.warmup is None else self.warmup
        h = 1e4 / mu if self.horizon is None else self.horizon
        if not (h > w >= 0):
            raise SimConfigError("need horizon > warmup >= 0")
        if self.replications < 2:
            raise SimConfigError("need at least 2 replications")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise SimConfigError("seed must be an unsigned 64-bit integer")
        return w, h


@dataclass(frozen=True)
class MetricEstimate:
    mean: float
    se: float
    ci95: float


@dataclass(frozen=True)
class SimEstimate:
    metrics: dict
    replications: int
    counters: dict
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.metrics[name]


# ------------------------------------------------------------------- kernel

@numba.njit(cache=True, nogil=True)
def _draw(cdf, u, overflow):
    # index of the first cdf entry exceeding u; beyond the table -> infeasible
    i = np.searchsorted(cdf, u, side="right")
    if i >= cdf.shape[0]:
        return overflow
    return i


@numba.njit(cache=True, nogil=True)
def _kernel(par, ipar, cdf1, cdf2, tail1, tail2, st, tnow, dem, ids, acc, cnt,
            ubuf, pos, trace, tpos):
    """Advance until the horizon (return 0), a buffer runs low (1),
    the trace buffer fills (2) or the PRB ledger breaks (-1)."""
    lam_m, lam_T, mu, nu, nu_B, nu_M = par[0], par[1], par[2], par[3], par[4], par[5]
    beta_B, beta_M, b_k, m_k, t_end, t_warm = par[6], par[7], par[8], par[9], par[10], par[11]
    strat, N, R, tracing = ipar[0], ipar[1], ipar[2], ipar[3]
    nbuf = ubuf.shape[1]
    over = R + 1
    r = np.empty(11)
    while True:
        for s in range(ubuf.shape[0]):
            if pos[s] > nbuf - 3:
                return 1
        if tracing and tpos[0] > trace.shape[0] - 3:
            return 2
        nT, used, n1, n2B, n2M = st[0], st[1], st[2], st[3], st[4]
        ntot = n1 + n2B + n2M
        r[0] = lam_m
        r[1] = mu * n1
        r[2] = nu * n1
        r[3] = lam_T
        r[4] = mu * nT
        r[5] = nu_B * nT
        r[6] = nu_M * nT
        r[7] = mu * n2B
        r[8] = beta_B * n2B
        r[9] = mu * n2M
        r[10] = beta_M * n2M
        total = r.sum()
        t = tnow[0]
        if total > 0:
            u = ubuf[0, pos[0]]
            pos[0] += 1
            dt = -math.log1p(-u) / total
        else:
            dt = t_end - t
        t_next = min(t + dt, t_end)
        lo = max(t, t_warm)
        if t_next > lo:
            w = t_next - lo
            acc[0] += w * used
            acc[1] += w * n1
            acc[2] += w * (n2B + n2M)
            acc[3] += w * nT
            acc[4] += w * (1.0 if ntot >= N else tail1[R - used])
            acc[5] += w * (1.0 if ntot >= N else tail2[R - used])
        if t + dt >= t_end:
            tnow[0] = t_end
            return 0
        t = t + dt
        tnow[0] = t
        meas = t >= t_warm
        if meas:
            cnt[8] += 1
        x = ubuf[1, pos[1]] * total
        pos[1] += 1
        ev = 0
        c = r[0]
        while x >= c and ev < 10:
            ev += 1
            c += r[ev]
        kind = -1
        sid = -1
        delta = 0
        node = 1
        if ev == 0:  # new mmWave session
            req = _draw(cdf1, ubuf[3, pos[3]], over)
            pos[3] += 1
            if meas:
                cnt[0] += 1
            if ntot < N and used + req <= R:
                sid = st[5]
                st[5] += 1
                dem[0, n1] = req
                ids[0, n1] = sid
                st[2] += 1
                st[1] += req
                delta = req
                kind = 0
                if meas:
                    cnt[1] += 1
            else:
                kind = 1
                if meas:
                    cnt[2] += 1
        elif ev == 1 or ev == 2:  # mmWave completion / blockage re-draw
            j = int(ubuf[2, pos[2]] * n1)
            pos[2] += 1
            old = dem[0, j]
            sid = ids[0, j]
            st[1] -= old
            remove = ev == 1
            if ev == 1:
                kind = 2
                delta = -old
            else:
                req = _draw(cdf1, ubuf[3, pos[3]], over)
                pos[3] += 1
                if st[1] + req <= R:
                    dem[0, j] = req
                    st[1] += req
                    delta = req - old
                    kind = 3
                else:
                    remove = True
                    delta = -old
                    kind = 4
                    if meas:
                        cnt[4] += 1
            if remove:
                last = n1 - 1
                dem[0, j] = dem[0, last]
                ids[0, j] = ids[0, last]
                st[2] -= 1
        elif ev == 3:  # new THz session
            st[0] += 1
            node = 0
            kind = 5
            if meas:
                cnt[3] += 1
        elif ev == 4:
            st[0] -= 1
            node = 0
            kind = 6
        elif ev == 5 or ev == 6:  # THz blockage / micromobility outage
            node = 0
            reroute = (ev == 5 and strat != 1) or (ev == 6 and strat == 4)
            if reroute:
                cls = 1 if ev == 5 else 2
                req = _draw(cdf2, ubuf[3, pos[3]], over)
                pos[3] += 1
                st[0] -= 1
                if meas:
                    cnt[6] += 1
                if ntot < N and used + req <= R:
                    k = st[2 + cls]
                    sid = st[5]
                    st[5] += 1
                    dem[cls, k] = req
                    ids[cls, k] = sid
                    st[2 + cls] += 1
                    st[1] += req
                    delta = req
                    node = 1
                    kind = 9 if cls == 1 else 10
                else:
                    kind = 11
                    if meas:
                        cnt[7] += 1
                        cnt[5] += 1
            else:
                p = b_k if ev == 5 else m_k
                coin = ubuf[3, pos[3]]
                pos[3] += 1
                if coin < p:
                    st[0] -= 1
                    kind = 7 if ev == 5 else 12
                    if meas:
                        cnt[5] += 1
                else:
                    kind = 8 if ev == 5 else 13
        else:  # rerouted session completes (7, 9) or returns (8, 10)
            cls = 1 if ev <= 8 else 2
            n = st[2 + cls]
            j = int(ubuf[2, pos[2]] * n)
            pos[2] += 1
            old = dem[cls, j]
            sid = ids[cls, j]
            st[1] -= old
            delta = -old
            dem[cls, j] = dem[cls, n - 1]
            ids[cls, j] = ids[cls, n - 1]
            st[2 + cls] -= 1
            if ev == 8 or ev == 10:
                st[0] += 1
                kind = 15
            else:
                kind = 14
        if st[1] < 0 or st[1] > R or st[2] + st[3] + st[4] > N:
            return -1
        if tracing:
            i = tpos[0]
            trace[i, 0] = t
            trace[i, 1] = node
            trace[i, 2] = kind
            trace[i, 3] = sid
            trace[i, 4] = delta
            tpos[0] += 1


# ------------------------------------------------------------ replications

def _cdf(pmf, R):
    head, beyond = pmf.truncated(R)
    cdf = np.cumsum(head)
    # guard against rounding: the feasible part ends exactly at 1 - beyond
    cdf = np.minimum(cdf, 1.0 - beyond)
    tail = np.concatenate([np.cumsum(head[::-1])[::-1][1:], [0.0]]) + beyond
    return cdf, tail


def _streams(seed, rep):
    return [np.random.Generator(np.random.Philox(np.random.SeedSequence(
        int(seed), spawn_key=(rep, s)))) for s in range(_N_STREAMS)]


def _replicate(rep, seed, par, ipar, cdf1, cdf2, tail1, tail2, N, R, trace_writer=None):
    gens = _streams(seed, rep)
    ubuf = np.empty((_N_STREAMS, _BUF))
    for s, g in enumerate(gens):
        ubuf[s] = g.random(_BUF)
    pos = np.zeros(_N_STREAMS, dtype=np.int64)
    st = np.zeros(6, dtype=np.int64)
    tnow = np.zeros(1)
    dem = np.zeros((3, N), dtype=np.int64)
    ids = np.zeros((3, N), dtype=np.int64)
    acc = np.zeros(6)
    cnt = np.zeros(9, dtype=np.int64)
    tracing = trace_writer is not None
    trace = np.zeros((4096 if tracing else 1, 5))
    tpos = np.zeros(1, dtype=np.int64)
    ip = ipar.copy()
    ip[3] = int(tracing)
    while True:
        code = _kernel(par, ip, cdf1, cdf2, tail1, tail2, st, tnow, dem, ids, acc, cnt,
                       ubuf, pos, trace, tpos)
        if tracing and (code == 2 or code == 0):
            trace_writer(rep, trace[: tpos[0]])
            tpos[0] = 0
        if code == 0:
            break
        if code == -1:
            raise AssertionError(f"PRB ledger violated at t={tnow[0]} (replication {rep})")
        if code == 1:
            for s, g in enumerate(gens):
                rest = ubuf[s, pos[s]:].copy()
                ubuf[s, : rest.size] = rest
                ubuf[s, rest.size:] = g.random(_BUF - rest.size)
                pos[s] = 0
    span = par[10] - par[11]
    return acc / span, cnt, st.copy()


def _workers():
    try:
        return max(1, int(os.environ.get("THZMM_WORKERS", "1")))
    except ValueError:
        return 1


def _estimate(samples, z_floor=None):
    x = np.asarray(samples, dtype=float)
    n = x.size
    m = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(n))
    if se == 0.0 and z_floor is not None:
        se = z_floor
    return MetricEstimate(mean=m, se=se, ci95=float(stats.t.ppf(0.975, n - 1) * se))


def _proportion_floor(events, trials):
    """Binomial SE at a Jeffreys-type point estimate; used only when every
    replication returned the same value (typically zero events)."""
    if trials <= 0:
        return 0.0
    p = (events + 0.5) / (trials + 1.0)
    return math.sqrt(p * (1.0 - p) / trials)


def simulate(scn, flows, pmfs, sim=None, b_k=1.0, m_k=1.0):
    """Replicated simulation at the given flows.

    `flows` supplies the exogenous rates (lambda_mmw, lambda_thz, mu, nu,
    nu_B, nu_M, beta_B, beta_M); the returning flows are generated by the
    simulation itself.  `b_k`/`m_k` are the S1 loss probabilities per
    blockage/micromobility outage (S2 tolerates, S3 drops micromobility).
    """
    validate(scn)
    sim = sim or SimConfig()
    warm, horizon = sim.resolved(flows.mu)
    pmf1, pmf2 = pmfs
    N, R = scn.solver.N_srv, scn.solver.R_prb
    if scn.strategy == "S2":
        m_k = 0.0
    elif scn.strategy == "S3":
        m_k = 1.0
    cdf1, tail1 = _cdf(pmf1, R)
    cdf2, tail2 = _cdf(pmf2, R)
    K = scn.deployment.K_thz
    par = np.array([flows.lambda_mmw, K * flows.lambda_thz, flows.mu, flows.nu, flows.nu_B,
                    flows.nu_M, flows.beta_B, flows.beta_M, b_k, m_k, horizon, warm])
    ipar = np.array([_STRATEGY_CODE[scn.strategy], N, R, 0], dtype=np.int64)

    writer, fh = None, None
    if sim.trace_path:
        fh = open(sim.trace_path, "w")
        fh.write("# replication time node event session_id prb_delta\n")

        def writer(rep, rows):
            for t, node, kind, sid, d in rows:
                fh.write(f"{rep} {t:.9f} {'mmw' if node else 'thz'} {TRACE_KINDS[int(kind)]} "
                         f"{int(sid)} {int(d)}\n")

    job = lambda rep: _replicate(rep, sim.seed, par, ipar, cdf1, cdf2, tail1, tail2, N, R,
                                 writer)
    try:
        if writer is None and _workers() > 1:
            with ThreadPoolExecutor(_workers()) as ex:
                results = list(ex.map(job, range(sim.replications)))
        else:
            results = [job(rep) for rep in range(sim.replications)]
    finally:
        if fh is not None:
            fh.close()
    return _summarize(results, R, sim, scn)


def _ratio(a, b):
    return a / b if b > 0 else 0.0


def _summarize(results, R, sim, scn):
    per = {k: [] for k in ("pi_N", "pi_N_cond", "pi_O", "pi_O_mmw", "pi_O_thz", "pi_a2",
                           "pi_a2_cond", "utilization", "N_bar_mmw", "N_bar_thz")}
    tot = np.zeros(9, dtype=np.int64)
    for avg, cnt, _ in results:
        tot += cnt
        accepted = cnt[C_ACC_M] + cnt[C_ARR_T]
        # no new arrivals: fall back to the time-average blocking (PASTA)
        per["pi_N"].append(_ratio(cnt[C_BLK_M], cnt[C_ARR_M]) if cnt[C_ARR_M] else avg[A_BLK1])
        per["pi_N_cond"].append(avg[A_BLK1])
        per["pi_O"].append(_ratio(cnt[C_LOST_M] + cnt[C_LOST_T], accepted))
        per["pi_O_mmw"].append(_ratio(cnt[C_LOST_M], cnt[C_ACC_M]))
        per["pi_O_thz"].append(_ratio(cnt[C_LOST_T], cnt[C_ARR_T]))
        per["pi_a2"].append(_ratio(cnt[C_RR_BLK], cnt[C_RR_TRY]))
        per["pi_a2_cond"].append(avg[A_BLK2])
        per["utilization"].append(avg[A_USED] / R)
        per["N_bar_mmw"].append(avg[A_N1] + avg[A_N2])
        per["N_bar_thz"].append(avg[A_NT] / scn.deployment.K_thz)
    floors = {
        "pi_N": (_proportion_floor(tot[C_BLK_M], tot[C_ARR_M]) if tot[C_ARR_M]
                 else _proportion_floor(0, tot[C_RR_TRY])),
        "pi_O": _proportion_floor(tot[C_LOST_M] + tot[C_LOST_T], tot[C_ACC_M] + tot[C_ARR_T]),
        "pi_O_mmw": _proportion_floor(tot[C_LOST_M], tot[C_ACC_M]),
        "pi_O_thz": _proportion_floor(tot[C_LOST_T], tot[C_ARR_T]),
        "pi_a2": _proportion_floor(tot[C_RR_BLK], tot[C_RR_TRY]),
    }
    metrics = {k: _estimate(v, floors.get(k)) for k, v in per.items()}
    names = ("arrivals_mmw", "accepted_mmw", "blocked_mmw", "arrivals_thz", "lost_mmw",
             "lost_thz", "reroute_attempts", "reroute_blocked", "events")
    counters = {n: int(v) for n, v in zip(names, tot)}
    meta = {"rng": RNG_ALGORITHM, "seed": int(sim.seed), "replications": sim.replications,
            "strategy": scn.strategy, "association": scn.association}
    return SimEstimate(metrics=metrics, replications=len(results), counters=counters,
                       metadata=meta)


def simulate_scenario(scn, sim=None):
    """Derive flows and pmfs from the analytical chain, then simulate."""
    from .strategies import NodeFlows, build_inputs

    inputs = build_inputs(scn)
    tr, ev = scn.traffic, inputs.rates
    flows = NodeFlows(lambda_thz=inputs.lambda_thz, lambda_mmw=inputs.lambda_mmw, gamma_k=0.0,
                      gamma_Kp1=0.0, gamma_B=0.0, gamma_M=0.0, mu=tr.mu, nu=ev.nu,
                      nu_B=ev.nu_B, nu_M=ev.nu_M, beta_B=tr.beta_B, beta_M=tr.beta_M)
    return simulate(scn, flows, (inputs.pmf1, inputs.pmf2), sim, inputs.b_k, inputs.m_k)


def simulate_sweep(scenarios, sim=None):
    """Simulate each scenario with seed (sim.seed XOR index); results in input order."""
    sim = sim or SimConfig()
    out = []
    for i, scn in enumerate(scenarios):
        cfg = SimConfig(seed=int(sim.seed) ^ i, warmup=sim.warmup, horizon=sim.horizon,
                        replications=sim.replications)
        out.append(simulate_scenario(scn, cfg))
    return out
