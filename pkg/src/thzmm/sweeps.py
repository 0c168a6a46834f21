"""Default parameter sweeps: the x-axes of the standard study plots.

Each sweep is a named list of (value, scenario) points.  Grid ranges are
chosen around the defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import with_drift
from .scenario import default_scenario

ASSOCIATIONS = ("A1", "A2")
STRATEGIES = ("S1", "S2", "S3", "S4")
LAMBDA_B = tuple(float(v) for v in np.round(np.linspace(0.1, 1.0, 10), 10))
DRIFT = tuple(float(v) for v in np.round(np.linspace(0.05, 0.5, 10), 10))
K_THZ = tuple(range(1, 11))
LAMBDA_A = tuple(float(v) for v in np.round(np.linspace(1e-4, 1e-3, 10), 12))
C_RATE = (10e6, 50e6, 100e6)


@dataclass(frozen=True)
class Sweep:
    name: str
    key: str
    association: str
    strategy: str
    label: str
    points: tuple  # ((value, Scenario), ...)


def _pair(base, a, s):
    return base.with_value("association", a).with_value("strategy", s)


def blocker_sweeps(base=None):
    base = base or default_scenario()
    for a in ASSOCIATIONS:
        for s in STRATEGIES:
            b = _pair(base, a, s)
            yield Sweep("lambda_B", "deployment.lambda_B", a, s, "",
                        tuple((v, b.with_value("deployment.lambda_B", v)) for v in LAMBDA_B))


def drift_sweeps(base=None):
    base = base or default_scenario()
    for a in ASSOCIATIONS:
        for s in STRATEGIES:
            b = _pair(base, a, s)
            yield Sweep("drift", "micromobility.delta_angle", a, s, "",
                        tuple((v, with_drift(b, delta_angle=v)) for v in DRIFT))


def density_sweeps(base=None):
    base = base or default_scenario()
    for a in ASSOCIATIONS:
        for s in STRATEGIES:
            b = _pair(base, a, s)
            yield Sweep("K_thz", "deployment.K_thz", a, s, "",
                        tuple((v, b.with_value("deployment.K_thz", v)) for v in K_THZ))


def load_sweeps(base=None):
    base = base or default_scenario()
    for arr in ((8, 4), (32, 4)):
        for s in STRATEGIES:
            b = _pair(base, "A1", s)
            b = replace(b, antenna=replace(b.antenna, M_B=arr))
            yield Sweep("lambda_A", "traffic.lambda_A", "A1", s, f"{arr[0]}x{arr[1]}",
                        tuple((v, b.with_value("traffic.lambda_A", v)) for v in LAMBDA_A))


def rate_sweeps(base=None):
    base = base or default_scenario()
    b = _pair(base, "A2", "S4")
    for c in C_RATE:
        bc = b.with_value("traffic.C_rate", c)
        yield Sweep("lambda_B", "deployment.lambda_B", "A2", "S4", f"C={c / 1e6:g}Mbps",
                    tuple((v, bc.with_value("deployment.lambda_B", v)) for v in LAMBDA_B))


def default_sweeps(base=None):
    """Every default sweep, in a fixed order."""
    for gen in (blocker_sweeps, drift_sweeps, density_sweeps, load_sweeps, rate_sweeps):
        yield from gen(base)


def multiconnectivity_gap(base=None, grid=LAMBDA_B):
    """pi_O(S1) - pi_O(S4) per association over the blocker grid."""
    from .strategies import run

    base = base or default_scenario()
    out = {}
    for a in ASSOCIATIONS:
        gaps = []
        for v in grid:
            b = base.with_value("association", a).with_value("deployment.lambda_B", v)
            gaps.append(run(b.with_value("strategy", "S1")).pi_O
                        - run(b.with_value("strategy", "S4")).pi_O)
        out[a] = tuple(gaps)
    return out


def shift_thresholds(scn, db):
    """Move every MCS switching threshold by `db`."""
    table = tuple((t + db, se) for t, se in scn.radio.S_min_table)
    return replace(scn, radio=replace(scn.radio, S_min_table=table))


def gap_sensitivity(base=None, shifts=(-3.0, 0.0, 3.0), ue_arrays=((2, 4), (4, 4), (8, 4)),
                    grid=LAMBDA_B):
    """Gap range per association over threshold shifts and UE array sizes.

    Returns [(shift_db, ue_array, association, min_gap, max_gap)]; points where
    the geometry does not fit are reported with NaN gaps.
    """
    from .errors import ThzmmError

    base = base or default_scenario()
    rows = []
    for db in shifts:
        for arr in ue_arrays:
            s = shift_thresholds(base, db)
            s = replace(s, antenna=replace(s.antenna, M_U=arr, T_U=arr))
            try:
                gaps = multiconnectivity_gap(s, grid)
            except ThzmmError:
                gaps = {a: (float("nan"),) for a in ASSOCIATIONS}
            for a in ASSOCIATIONS:
                rows.append((db, arr, a, min(gaps[a]), max(gaps[a])))
    return rows
