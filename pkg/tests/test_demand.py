import csv
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from thzmm import demand, radio
from thzmm.demand import ResourcePmf, SinrCdf
from thzmm.errors import DomainError
from thzmm.radio import LinkState
from thzmm.scenario import default_scenario

from oracles import sample_native_sinr, sample_rerouted_distance

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def scn():
    return default_scenario()


@pytest.fixture(scope="module")
def radii(scn):
    return radio.coverage_radii(scn)


def test_distance_cdf_examples():
    dh = 10 - 1.7
    assert demand.distance_cdf_native(dh, 73.3, 10, 1.7) == 0.0
    assert demand.distance_cdf_native(math.hypot(73.3, dh), 73.3, 10, 1.7) == pytest.approx(1.0)
    assert demand.distance_cdf_native(40.0, 73.3, 10, 1.7) == pytest.approx(0.285, abs=5e-4)
    with pytest.raises(DomainError):
        demand.distance_cdf_native(5.0, 73.3, 10, 1.7)
    with pytest.raises(DomainError):
        demand.distance_cdf_native(80.0, 73.3, 10, 1.7)


def test_no_blockers_gives_nonblocked_branch(scn, radii):
    s = scn.with_value("deployment.lambda_B", 0.0)
    F = demand.sinr_cdf_native(s, radii.r_M)
    C = radio.budget_constant(s, "M")
    z1 = s.radio.zeta_M_1
    dh = s.deployment.h_M_B - s.deployment.h_U
    Q = math.hypot(radii.r_M, dh)
    for sv in np.geomspace(C * Q ** -z1, C * dh ** -z1, 25):
        y = (C / sv) ** (1 / z1)
        expected = 1.0 - demand.distance_cdf_native(min(max(y, dh), Q), radii.r_M, 10, 1.7)
        assert F(sv) == pytest.approx(expected, abs=1e-12)
    # lower support edge of the non-blocked branch
    assert F(C * Q ** -z1) == pytest.approx(0.0, abs=1e-12)


def test_native_cdf_against_sampling(scn, radii):
    rng = np.random.default_rng(11)
    samples = np.sort(sample_native_sinr(scn, radii.r_M, 1_000_000, rng))
    F = demand.sinr_cdf_native(scn, radii.r_M)
    grid = np.quantile(samples, np.linspace(0.001, 0.999, 400))
    th = np.array([10 ** (t / 10) for t, _ in scn.radio.S_min_table])
    grid = np.concatenate([grid, th])
    ecdf_hi = np.searchsorted(samples, grid, side="right") / samples.size
    ecdf_lo = np.searchsorted(samples, grid, side="left") / samples.size
    model = F(grid)
    ks = max(np.max(np.abs(model - ecdf_hi)), np.max(np.abs(model - ecdf_lo)))
    assert ks <= 0.005


def test_cdf_monotone_with_limits(scn, radii):
    F = demand.sinr_cdf_native(scn, radii.r_M)
    s = np.geomspace(F.lower / 10, F.upper * 10, 200)
    v = F(s)
    assert np.all(np.diff(v) >= -1e-14)
    assert v[0] == pytest.approx(0.0, abs=1e-12) and v[-1] == pytest.approx(1.0, abs=1e-12)


TH = [-5.0, 0.0, 2.0, 6.0, 11.0]


def test_mcs_split_degenerate():
    above = SinrCdf(lambda s: 0.0, 0, 1)
    eps, inf = demand.mcs_split(above, TH)
    assert list(eps) == [0, 0, 0, 0, 1] and inf == 0
    below = SinrCdf(lambda s: 1.0, 0, 1)
    eps, inf = demand.mcs_split(below, TH)
    assert np.all(eps == 0) and inf == 1.0


def test_mcs_split_uniform_in_db():
    top = 15.0
    F = SinrCdf(lambda s: min(1.0, max(0.0, (10 * math.log10(s) - TH[0]) / (top - TH[0]))), 0, 1)
    eps, inf = demand.mcs_split(F, TH)
    gaps = np.diff(TH + [top])
    assert inf == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(eps, gaps / gaps.sum(), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.2, 5.0), loc=st.floats(-5, 10), scale=st.floats(0.5, 8))
def test_mcs_split_reparameterization_invariant(a, loc, scale):
    # smooth cdf in dB; reparameterize s -> s^a (dB -> a*dB)
    from scipy.stats import logistic
    F = SinrCdf(lambda s: logistic.cdf(10 * math.log10(s), loc, scale), 0, 1)
    G = SinrCdf(lambda s: logistic.cdf(10 * math.log10(s) / a, loc, scale), 0, 1)
    e1, i1 = demand.mcs_split(F, TH)
    e2, i2 = demand.mcs_split(G, [a * t for t in TH])
    assert np.allclose(e1, e2, atol=1e-12) and i1 == pytest.approx(i2, abs=1e-12)


def test_demand_pmf_small_rate(scn):
    s = scn.with_value("traffic.C_rate", 1e-3)
    eps, inf = np.full(15, 1 / 15), 0.0
    p = demand.demand_pmf(eps, s, inf)
    assert p.probs[1] == pytest.approx(1.0) and p.total == pytest.approx(1.0)


def test_demand_pmf_exact_fit(scn):
    rate = demand.prb_rate(scn)
    s = scn.with_value("radio.S_min_table", ((0.0, 2.0),)).with_value("traffic.C_rate", 2.0 * rate)
    p = demand.demand_pmf([1.0], s)
    assert p.probs[1] == 1.0 and len(p.probs) == 2


def test_demand_pmf_rejects_excess_mass(scn):
    with pytest.raises(DomainError):
        demand.demand_pmf(np.full(15, 0.1), scn)


def _read_golden(name):
    probs, inf, samples = {}, 0.0, None
    with open(GOLDEN / name) as fh:
        head = fh.readline()
        samples = int(head.split("samples=")[1].split()[0])
        for row in csv.DictReader(fh):
            if row["r"] == "infeasible":
                inf = float(row["probability"])
            else:
                probs[int(row["r"])] = float(row["probability"])
    return probs, inf, samples


@pytest.mark.parametrize("name,kind", [("pmf_native.csv", "native"),
                                       ("pmf_rerouted_A1.csv", "rerouted")])
def test_pmf_matches_golden(scn, radii, name, kind):
    g, g_inf, n = _read_golden(name)
    p = (demand.demand_pmf_native(scn, radii) if kind == "native"
         else demand.demand_pmf_rerouted(scn, radii, radii.r_T_A1))
    assert p.total == pytest.approx(1.0, abs=1e-9)
    for r in range(max(len(p.probs), max(g) + 1)):
        model = p.probs[r] if r < len(p.probs) else 0.0
        ref = g.get(r, 0.0)
        sd = math.sqrt(max(ref * (1 - ref), model * (1 - model)) / n)
        assert abs(model - ref) <= 5 * sd + 1e-7, r
    assert abs(p.infeasible - g_inf) <= 5 * math.sqrt(max(g_inf, 1e-7) / n) + 1e-7


@pytest.mark.parametrize("r_T", [0.5, 20.1, 50.0, 73.3])
def test_rerouted_pdf_normalized(r_T):
    r_M = 73.3
    pdf = demand.rerouted_distance_pdf(r_M, r_T)
    pts = sorted({abs(r_M - r_T), r_M})
    v, _ = integrate.quad(pdf, 0, r_M + r_T, points=pts, epsabs=1e-13, limit=400)
    assert v == pytest.approx(1.0, abs=1e-6)
    assert pdf(r_M + r_T + 1e-9) == 0.0 and pdf(r_M + r_T - 1e-3) > 0.0


def test_rerouted_pdf_degenerates_to_uniform_disc():
    r_M = 73.3
    pdf = demand.rerouted_distance_pdf(r_M, 1e-4)
    for d in np.linspace(1.0, r_M - 1.0, 30):
        assert pdf(d) == pytest.approx(2 * d / r_M ** 2, rel=1e-6)


def test_cosine_construction_edges():
    rng = np.random.default_rng(2)
    d = sample_rerouted_distance(73.3, 20.1, 200_000, rng)
    assert d.min() >= 0 and d.max() <= 73.3 + 20.1
    # psi = 0 and pi give |D3 - D4| and D3 + D4
    d3, d4 = 50.0, 20.0
    assert math.sqrt(d3 ** 2 + d4 ** 2 - 2 * d3 * d4 * math.cos(0.0)) == pytest.approx(30.0)
    assert math.sqrt(d3 ** 2 + d4 ** 2 - 2 * d3 * d4 * math.cos(math.pi)) == pytest.approx(70.0)


def test_rerouted_distance_mean_vs_sampling():
    r_M, r_T = 73.3, 20.1
    pdf = demand.rerouted_distance_pdf(r_M, r_T)
    mean, _ = integrate.quad(lambda x: x * pdf(x), 0, r_M + r_T, points=[r_M - r_T, r_M],
                             epsabs=1e-12, limit=400)
    rng = np.random.default_rng(5)
    mc = np.mean([sample_rerouted_distance(r_M, r_T, 2_000_000, rng).mean() for _ in range(5)])
    assert mean == pytest.approx(mc, rel=1e-3)


def test_rerouted_equals_native_in_colocated_limit(scn, radii):
    s = scn.with_value("deployment.lambda_B", 0.0)
    p1 = demand.demand_pmf_native(s, radii)
    p2 = demand.demand_pmf_rerouted(s, radii, 1e-3)
    tv = 0.5 * (np.abs(p1.probs - p2.probs).sum() + abs(p1.infeasible - p2.infeasible))
    assert tv <= 1e-3
    p1b = demand.demand_pmf_native(scn, radii)
    p2b = demand.demand_pmf_rerouted(scn, radii, 1e-3)
    assert 0.5 * np.abs(p1b.probs - p2b.probs).sum() <= 1e-3


def test_rerouted_total_mass(scn, radii):
    for r_T in (radii.r_T_A1, 40.0, radii.r_M):
        assert demand.demand_pmf_rerouted(scn, radii, r_T).total == pytest.approx(1.0, abs=1e-9)


def test_blockers_raise_mean_demand(scn, radii):
    means = [demand.demand_pmf_native(scn.with_value("deployment.lambda_B", lam), radii).mean()
             for lam in np.linspace(0, 1, 11)]
    assert all(b >= a - 1e-12 for a, b in zip(means, means[1:]))


@settings(max_examples=25, deadline=None)
@given(lam=st.floats(0, 2), rate=st.floats(1e5, 1e9), r_T=st.floats(0.5, 70))
def test_pmfs_normalized(lam, rate, r_T):
    s = default_scenario().with_value("deployment.lambda_B", lam).with_value("traffic.C_rate", rate)
    radii = radio.coverage_radii(s)
    for p in (demand.demand_pmf_native(s, radii), demand.demand_pmf_rerouted(s, radii, r_T)):
        assert p.total == pytest.approx(1.0, abs=1e-9)
        assert np.all(p.probs >= 0)


def test_resource_pmf_helpers():
    p = ResourcePmf(np.array([0, 0.5, 0.25, 0.25]), 0.0)
    head, beyond = p.truncated(2)
    assert list(head) == [0, 0.5, 0.25] and beyond == 0.25
    assert p.mean() == pytest.approx(1.75)
    assert ResourcePmf.point(3).probs[3] == 1.0
    with pytest.raises(DomainError):
        ResourcePmf(np.array([-0.1, 1.1]))


def test_blocked_branch_cdf_single_state(scn, radii):
    # everyone blocked: cdf is the blocked power law over the disc
    s = scn.with_value("deployment.lambda_B", 1e4)
    F = demand.sinr_cdf_native(s, radii.r_M)
    C, z2 = radio.budget_constant(s, "M"), s.radio.zeta_M_2
    y = 40.0
    sv = radio.sinr_mmwave(y, LinkState.LosBlocked, s)
    assert sv == pytest.approx(C * y ** -z2)
    assert F(sv) == pytest.approx(1 - demand.distance_cdf_native(y, radii.r_M, 10, 1.7), abs=1e-9)
