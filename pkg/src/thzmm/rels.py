"""Loss systems with random resource requirements (ReLS).

A node has N servers and R PRBs.  An admitted session holds one server and
a random number of PRBs drawn from its class pmf.  With Poisson arrivals and
exponential holding times the joint law of (sessions, occupied PRBs) has a
product form built from n-fold convolutions of the demand pmfs.

Blocking probabilities are evaluated as sums of *blocking* state mass
(server-full states plus, for the rest, the probability that a fresh demand
exceeds the free PRBs), never as ``1 - acceptance``; this keeps full relative
precision when blocking is tiny.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import gammaln

from .errors import ConvergenceError, DomainError


@dataclass(frozen=True)
class ConvolutionTable:
    """table[n, r] = P(n i.i.d. demands sum to r), r <= R; overflow[n] = mass beyond R."""

    table: np.ndarray
    overflow: np.ndarray
    tail: np.ndarray  # tail[k] = P(one demand > k), k = 0..R

    @property
    def N(self):
        return self.table.shape[0] - 1

    @property
    def R(self):
        return self.table.shape[1] - 1


def convolve(pmf, N, R):
    """Truncated n-fold self-convolutions of a demand pmf for n = 0..N."""
    head, beyond = pmf.truncated(R)
    tab = np.zeros((N + 1, R + 1))
    tab[0, 0] = 1.0
    support = np.nonzero(head)[0]
    for n in range(1, N + 1):
        prev = tab[n - 1]
        row = np.zeros(R + 1)
        for j in support:
            row[j:] += head[j] * prev[: R + 1 - j]
        tab[n] = row
    # suffix sums give P(demand > k) without cancellation
    suffix = np.concatenate([np.cumsum(head[::-1])[::-1][1:], [0.0]])
    tail = suffix + beyond
    overflow = np.maximum(1.0 - tab.sum(axis=1), 0.0)
    return ConvolutionTable(tab, overflow, tail)


def _blocking_rows(ct):
    """U[n, k] = P(n demands fit in k PRBs but one more demand does not)."""
    N, R = ct.N, ct.R
    U = np.empty((N + 1, R + 1))
    for n in range(N + 1):
        U[n] = np.convolve(ct.table[n], ct.tail)[: R + 1]
    return U


def _log_weights(rho, N):
    n = np.arange(N + 1)
    if rho == 0:
        out = np.full(N + 1, -np.inf)
        out[0] = 0.0
        return out
    return n * math.log(rho) - gammaln(n + 1)


# ------------------------------------------------------------- single class

@dataclass(frozen=True)
class SingleClassSolution:
    N_bar: float
    q0: float
    pi_N: float
    pi_s: float
    R_bar: float
    rho: float
    iterations: int
    residual: float
    method: str = "substitution"
    steps: tuple = ()  # |change in N_bar| per substitution step


class SingleClassSystem:
    """Precomputed convolution sums for one demand pmf; cheap to evaluate at any load."""

    def __init__(self, pmf, N, R):
        if N < 1 or R < 0:
            raise DomainError("need N >= 1 and R >= 0")
        self.N, self.R = N, R
        self.ct = convolve(pmf, N, R)
        tab = self.ct.table
        self.fit = tab.sum(axis=1)  # P^(n)(R)
        self.block = _blocking_rows(self.ct)[:, R].copy()
        self.block[N] = self.fit[N]  # all servers busy
        self.res = tab @ np.arange(R + 1, dtype=float)

    def evaluate(self, rho):
        """(q0, pi_block, N_bar, R_bar) at offered load rho."""
        lw = _log_weights(rho, self.N)
        shift = lw.max()
        w = np.exp(lw - shift)
        Z = float(np.sum(w * self.fit))
        n = np.arange(self.N + 1)
        q0 = math.exp(-shift) / Z if shift < 700 else 0.0
        return (q0, float(np.sum(w * self.block)) / Z,
                float(np.sum(n * w * self.fit)) / Z, float(np.sum(w * self.res)) / Z)

    def distribution(self, rho):
        """Stationary law q[n, r] at offered load rho."""
        w = np.exp(_log_weights(rho, self.N) - _log_weights(rho, self.N).max())
        q = w[:, None] * self.ct.table
        return q / q.sum()


def solve_single_class(lam, mu_eff, nu, pmf, N, R, tol=1e-10, max_iter=100, system=None):
    """Single-class ReLS where every session also re-draws its demand at rate nu.

    A re-draw that does not fit drops the session.  Re-draws act as extra
    arrivals of rate N_bar * nu, so the offered load is
    rho = (lam + N_bar nu) / (mu_eff + nu) and N_bar solves
    N_bar = sum_n n q_n.  Since N_bar = rho (1 - pi) the fixed point is
    iterated on the blocking probability pi, with a bracketing fallback.
    `mu_eff` is the completion rate excluding nu.
    """
    if lam < 0 or mu_eff <= 0 or nu < 0:
        raise DomainError("need lam >= 0, mu_eff > 0, nu >= 0")
    sysm = system or SingleClassSystem(pmf, N, R)

    def rho_of(pi):
        return lam / (mu_eff + nu * pi)

    def nbar_of(pi):
        return lam * (1.0 - pi) / (mu_eff + nu * pi)

    pi, it, method = 0.0, 0, "substitution"
    nbar = nbar_of(pi)
    converged = False
    steps = []
    while it < max_iter:
        it += 1
        new_pi = sysm.evaluate(rho_of(pi))[1]
        new_nbar = nbar_of(new_pi)
        step = abs(new_nbar - nbar)
        steps.append(step)
        pi, nbar = new_pi, new_nbar
        if step < tol:
            converged = True
            break
    if not converged:
        g = lambda p: p - sysm.evaluate(rho_of(p))[1]
        try:
            pi = optimize.brentq(g, 0.0, 1.0, xtol=1e-16, rtol=8.9e-16, maxiter=500)
        except ValueError as exc:
            raise ConvergenceError("single-class fixed point", iterations=it) from exc
        method = "bracketed"
    rho = rho_of(pi)
    q0, pi_N, nbar, r_bar = sysm.evaluate(rho)
    # residual of the defining equation N = sum_n n q_n(rho(N))
    residual = abs(sysm.evaluate((lam + nbar * nu) / (mu_eff + nu))[2] - nbar)
    if not residual <= tol:
        raise ConvergenceError("single-class fixed point", residual, it)
    accepted = lam * (1.0 - pi_N)
    pi_s = nbar * nu * pi_N / accepted if accepted > 0 else 0.0
    return SingleClassSolution(N_bar=nbar, q0=q0, pi_N=pi_N, pi_s=min(pi_s, 1.0),
                               R_bar=r_bar, rho=rho, iterations=it, residual=residual,
                               method=method, steps=tuple(steps))


# ---------------------------------------------------------------- two class

@dataclass(frozen=True)
class TwoClassSolution:
    q0: float
    N1_bar: float
    N2_bar: float
    pi_a1: float
    pi_a2: float
    R_bar: float
    N2B_bar: float
    N2M_bar: float
    rho1: float
    rho2: float


class TwoClassSystem:
    """Precomputed double-convolution sums for a pair of demand pmfs.

    With w = rho1^n1/n1! rho2^n2/n2!, every metric is a weighted sum over
    (n1, n2) of a matrix that does not depend on the loads.
    """

    def __init__(self, pmf1, pmf2, N, R):
        if N < 1 or R < 0:
            raise DomainError("need N >= 1 and R >= 0")
        self.N, self.R = N, R
        self.ct1, self.ct2 = convolve(pmf1, N, R), convolve(pmf2, N, R)
        P1, P2 = self.ct1.table, self.ct2.table
        C2 = np.cumsum(P2, axis=1)
        r = np.arange(R + 1, dtype=float)
        M2 = np.cumsum(P2 * r, axis=1)
        self.G = P1 @ C2[:, ::-1].T  # P(n1 + n2 demands fit in R)
        U1, U2 = _blocking_rows(self.ct1), _blocking_rows(self.ct2)
        self.H1 = U1[:, ::-1] @ P2.T  # fits, but one more class-1 demand does not
        self.H2 = P1 @ U2[:, ::-1].T
        self.Rs = (P1 * r) @ C2[:, ::-1].T + P1 @ M2[:, ::-1].T
        n1, n2 = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="ij")
        self.n1, self.n2 = n1, n2
        self.adm = (n1 + n2) <= N
        self.full = (n1 + n2) == N
        self.H1 = np.where(self.full, self.G, self.H1)
        self.H2 = np.where(self.full, self.G, self.H2)

    def _weights(self, rho1, rho2):
        lw = _log_weights(rho1, self.N)[:, None] + _log_weights(rho2, self.N)[None, :]
        lw = np.where(self.adm, lw, -np.inf)
        shift = lw.max()
        return np.exp(lw - shift), shift

    def solve(self, rho1, rho2, rho2_split=None):
        if rho1 < 0 or rho2 < 0:
            raise DomainError("loads must be >= 0")
        w, shift = self._weights(rho1, rho2)
        Z = float(np.sum(w * self.G))
        q0 = math.exp(-shift) / Z if shift < 700 else 0.0
        n1 = float(np.sum(self.n1 * w * self.G)) / Z
        n2 = float(np.sum(self.n2 * w * self.G)) / Z
        if rho2_split is not None and rho2 > 0:
            fb = rho2_split[0] / rho2
            n2b, n2m = n2 * fb, n2 * (1.0 - fb)
        else:
            n2b, n2m = n2, 0.0
        return TwoClassSolution(
            q0=q0, N1_bar=n1, N2_bar=n2,
            pi_a1=float(np.sum(w * self.H1)) / Z, pi_a2=float(np.sum(w * self.H2)) / Z,
            R_bar=float(np.sum(w * self.Rs)) / Z, N2B_bar=n2b, N2M_bar=n2m,
            rho1=rho1, rho2=rho2)

    def distribution(self, rho1, rho2):
        """Full stationary law q[n1, n2, r1, r2] (small instances only)."""
        w, shift = self._weights(rho1, rho2)
        P1, P2 = self.ct1.table, self.ct2.table
        q = w[:, :, None, None] * P1[:, None, :, None] * P2[None, :, None, :]
        r = np.arange(self.R + 1)
        q = q * ((r[:, None] + r[None, :]) <= self.R)[None, None]
        return q / q.sum()


def solve_two_class(rho1, rho2, pmf1, pmf2, N, R, rho2_split=None, system=None):
    """Stationary metrics of the two-class ReLS at offered loads (rho1, rho2).

    `rho2_split=(rho2B, rho2M)` apportions the class-2 mean between its two
    sub-flows in proportion to their loads.
    """
    sysm = system or TwoClassSystem(pmf1, pmf2, N, R)
    return sysm.solve(rho1, rho2, rho2_split)

