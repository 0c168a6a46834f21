"""Scenario parameters: defaults, validation and TOML (de)serialization.

Every downstream computation is a pure function of one immutable
:class:`Scenario`.  Config files are TOML with one table per parameter
group; omitted keys keep their defaults, unknown keys are rejected.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib
import tomli_w

from .errors import ConfigParseError, ValidationError

ASSOCIATIONS = ("A1", "A2")
STRATEGIES = ("S1", "S2", "S3", "S4")
ALIGNMENT_MODES = ("on-demand", "periodic")
OUTAGE_DURATION_MODELS = ("deterministic", "exponential")


def load_mcs_table(path=None):
    """Read an MCS table CSV into ((threshold_dB, spectral_eff), ...)."""
    if path is None:
        text = resources.files("thzmm").joinpath("data/mcs_table.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("\n".join(rows)))
    table = []
    for rec in reader:
        table.append((float(rec["sinr_db"]), float(rec["spectral_efficiency"])))
    return tuple(table)


DEFAULT_MCS_TABLE = load_mcs_table()


@dataclass(frozen=True)
class RadioParams:
    f_M_c: float = 28.0  # GHz
    f_T_c: float = 300.0  # GHz
    B_M: float = 400e6  # Hz
    P_M: float = 2.0  # W
    P_T: float = 2.0  # W
    # Total receiver noise over the carrier, dBm (kTB at 400 MHz plus a 4 dB
    # noise figure); the same floor is used for the THz receiver.
    N0: float = -84.0
    M_M_I: float = 3.0  # dB
    M_T_I: float = 3.0  # dB
    zeta_M_1: float = 2.1  # non-blocked
    zeta_M_2: float = 3.19  # blocked
    zeta_T_1: float = 2.1
    zeta_T_2: float = 3.19
    sigma_M_2: float = 7.2  # dB
    sigma_T_2: float = 7.2  # dB
    K_abs: float = 0.04  # 1/m
    S_min_table: tuple = DEFAULT_MCS_TABLE
    p_M_O: float = 0.05
    p_T_O: float = 0.05
    subcarrier_spacing: float = 120e3  # Hz
    prb_overhead: float = 13.0 / 14.0


@dataclass(frozen=True)
class AntennaParams:
    # (N_V, N_H) element counts
    M_B: tuple = (8, 4)
    M_U: tuple = (4, 4)
    T_B: tuple = (64, 4)
    T_U: tuple = (4, 4)
    # switching time chosen so that T_B = (64*4 + 4*4) * delta = 1/1800 s
    delta: float = 1.0 / 1800.0 / 272.0


@dataclass(frozen=True)
class DeploymentParams:
    K_thz: int = 5
    h_M_B: float = 10.0
    h_T_B: float = 10.0
    h_B: float = 1.7
    h_U: float = 1.7
    lambda_B: float = 0.1  # 1/m^2
    r_B: float = 0.4  # m
    v_B: float = 1.0  # m/s
    tau_run: float = 10.0  # m, informational
    d_min: float = 3.0  # m, minimum BS-UE separation for the mmWave blockage average
    # Limit the THz radius to r_M / sqrt(K) so that K cells fit in the mmWave disc.
    cap_thz_radius: bool = True


@dataclass(frozen=True)
class TrafficParams:
    lambda_A: float = 1e-4  # sessions/s/m^2
    C_rate: float = 10e6  # bit/s
    mu: float = 0.1  # 1/s
    beta_B: float = 1.25  # 1/s
    beta_M: float = 1800.0  # 1/s
    T_O: Optional[float] = None  # None -> beamalignment time
    T_U: Optional[float] = None
    alignment_mode: str = "on-demand"
    # Outage duration used for the no-rerouting loss probabilities b_k, m_k:
    # blockage outages are exponential(beta_B); micromobility outages last
    # exactly the beamalignment time ("deterministic") or are exponential(beta_M).
    micromobility_duration: str = "deterministic"


@dataclass(frozen=True)
class MicromobilityParams:
    # log-seconds; Brownian exit-time fit, see dynamics.derive_micromobility
    # (reference distance: mean UE distance in the default A1 THz cell)
    mu_x: float = 9.147057501523118
    sigma_x: float = 0.7865115626371209
    mu_y: float = 3.551818627876359
    sigma_y: float = 0.7865115626371209
    mu_phi: float = 9.406539903539688
    sigma_phi: float = 0.7865115626371209
    mu_theta: float = 9.406539903539688
    sigma_theta: float = 0.7865115626371209
    delta_xy: float = 0.03  # m/s
    delta_angle: float = 0.1  # deg/s


@dataclass(frozen=True)
class SolverParams:
    R_prb: int = 264
    N_srv: int = 264
    fp_tol: float = 1e-10
    fp_max_iter: int = 100
    quad_tol: float = 1e-10


@dataclass(frozen=True)
class Scenario:
    radio: RadioParams = field(default_factory=RadioParams)
    antenna: AntennaParams = field(default_factory=AntennaParams)
    deployment: DeploymentParams = field(default_factory=DeploymentParams)
    traffic: TrafficParams = field(default_factory=TrafficParams)
    micromobility: MicromobilityParams = field(default_factory=MicromobilityParams)
    solver: SolverParams = field(default_factory=SolverParams)
    association: str = "A1"
    strategy: str = "S1"

    def with_value(self, path, value):
        """Copy with the dotted-path field replaced (e.g. 'deployment.lambda_B')."""
        parts = path.split(".")
        if len(parts) == 1:
            if parts[0] not in _field_names(Scenario) or parts[0] in _GROUPS:
                raise ValidationError(path, "unknown scalar field")
            return validate(replace(self, **{parts[0]: value}))
        if len(parts) != 2 or parts[0] not in _GROUPS:
            raise ValidationError(path, "unknown field path")
        group = getattr(self, parts[0])
        if parts[1] not in _field_names(type(group)):
            raise ValidationError(path, "unknown field path")
        return validate(replace(self, **{parts[0]: replace(group, **{parts[1]: value})}))

    def get_value(self, path):
        obj = self
        for p in path.split("."):
            if not hasattr(obj, p):
                raise ValidationError(path, "unknown field path")
            obj = getattr(obj, p)
        return obj


_GROUPS = {
    "radio": RadioParams,
    "antenna": AntennaParams,
    "deployment": DeploymentParams,
    "traffic": TrafficParams,
    "micromobility": MicromobilityParams,
    "solver": SolverParams,
}


def _field_names(cls):
    return {f.name for f in fields(cls)}


def default_scenario():
    return Scenario()


# ---------------------------------------------------------------- validation

def _positive(path, v):
    if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
        raise ValidationError(path, f"must be a finite positive number, got {v!r}")


def _nonneg(path, v):
    if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
        raise ValidationError(path, f"must be a finite number >= 0, got {v!r}")


def _open_unit(path, v):
    if not (isinstance(v, (int, float)) and 0 < v < 1):
        raise ValidationError(path, f"must lie in (0, 1), got {v!r}")


def _count(path, v, lo=1):
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ValidationError(path, f"must be an integer >= {lo}, got {v!r}")


def _choice(path, v, options):
    if v not in options:
        raise ValidationError(path, f"must be one of {options}, got {v!r}")


def validate(scn):
    """Return `scn` unchanged if every invariant holds, else raise ValidationError."""
    r = scn.radio
    for name in ("f_M_c", "f_T_c", "B_M", "P_M", "P_T", "sigma_M_2", "sigma_T_2",
                 "subcarrier_spacing"):
        _positive(f"radio.{name}", getattr(r, name))
    for name in ("N0", "M_M_I", "M_T_I"):
        v = getattr(r, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v)):
            raise ValidationError(f"radio.{name}", f"must be finite, got {v!r}")
    for name in ("zeta_M_1", "zeta_M_2", "zeta_T_1", "zeta_T_2"):
        v = getattr(r, name)
        if not (isinstance(v, (int, float)) and v >= 2):
            raise ValidationError(f"radio.{name}", f"path-loss exponent must be >= 2, got {v!r}")
    _nonneg("radio.K_abs", r.K_abs)
    _open_unit("radio.p_M_O", r.p_M_O)
    _open_unit("radio.p_T_O", r.p_T_O)
    if not (0 < r.prb_overhead <= 1):
        raise ValidationError("radio.prb_overhead", "must lie in (0, 1]")
    tab = r.S_min_table
    if len(tab) < 1:
        raise ValidationError("radio.S_min_table", "must have at least one row")
    for i, row in enumerate(tab):
        if len(row) != 2 or not all(math.isfinite(x) for x in row):
            raise ValidationError(f"radio.S_min_table[{i}]", "rows are (threshold_dB, spectral_eff)")
        if row[1] <= 0:
            raise ValidationError(f"radio.S_min_table[{i}]", "spectral efficiency must be > 0")
    for i in range(1, len(tab)):
        if not tab[i][0] > tab[i - 1][0]:
            raise ValidationError(f"radio.S_min_table[{i}]", "thresholds must be strictly increasing")

    a = scn.antenna
    for name in ("M_B", "M_U", "T_B", "T_U"):
        dims = getattr(a, name)
        if len(dims) != 2:
            raise ValidationError(f"antenna.{name}", "must be (N_V, N_H)")
        for d in dims:
            _count(f"antenna.{name}", d)
    _positive("antenna.delta", a.delta)

    d = scn.deployment
    _count("deployment.K_thz", d.K_thz)
    for name in ("h_M_B", "h_T_B", "h_B", "h_U", "r_B", "v_B", "tau_run"):
        _positive(f"deployment.{name}", getattr(d, name))
    _nonneg("deployment.lambda_B", d.lambda_B)
    _nonneg("deployment.d_min", d.d_min)
    if not isinstance(d.cap_thz_radius, bool):
        raise ValidationError("deployment.cap_thz_radius", "must be a boolean")
    if not (d.h_U < d.h_M_B and d.h_U < d.h_T_B):
        raise ValidationError("deployment.h_U", "UE must be below both BS heights")
    # The blockage-zone length grows with distance only for blockers at least
    # as tall as the UE; lower blockers would make p_B decrease with distance.
    if d.h_B < d.h_U:
        raise ValidationError("deployment.h_B", "blocker height must be >= UE height")

    t = scn.traffic
    for name in ("lambda_A", "C_rate", "mu", "beta_B", "beta_M"):
        _positive(f"traffic.{name}", getattr(t, name))
    if t.T_O is not None:
        _nonneg("traffic.T_O", t.T_O)
    _choice("traffic.alignment_mode", t.alignment_mode, ALIGNMENT_MODES)
    _choice("traffic.micromobility_duration", t.micromobility_duration, OUTAGE_DURATION_MODELS)
    if t.T_U is not None:
        _positive("traffic.T_U", t.T_U)
    elif t.alignment_mode == "periodic":
        raise ValidationError("traffic.T_U", "required for periodic beamalignment")

    m = scn.micromobility
    for axis in ("x", "y", "phi", "theta"):
        mu = getattr(m, f"mu_{axis}")
        if not math.isfinite(mu):
            raise ValidationError(f"micromobility.mu_{axis}", "must be finite")
        _positive(f"micromobility.sigma_{axis}", getattr(m, f"sigma_{axis}"))
    _nonneg("micromobility.delta_xy", m.delta_xy)
    _nonneg("micromobility.delta_angle", m.delta_angle)

    s = scn.solver
    _count("solver.R_prb", s.R_prb)
    _count("solver.N_srv", s.N_srv)
    _open_unit("solver.fp_tol", s.fp_tol)
    _open_unit("solver.quad_tol", s.quad_tol)
    _count("solver.fp_max_iter", s.fp_max_iter)

    _choice("association", scn.association, ASSOCIATIONS)
    _choice("strategy", scn.strategy, STRATEGIES)
    return scn


# ------------------------------------------------------------ serialization

def _to_plain(v):
    if isinstance(v, tuple):
        return [_to_plain(x) for x in v]
    return v


def scenario_to_dict(scn, include_none=False):
    out = {"association": scn.association, "strategy": scn.strategy}
    for g in _GROUPS:
        grp = getattr(scn, g)
        out[g] = {f.name: _to_plain(getattr(grp, f.name)) for f in fields(grp)
                  if include_none or getattr(grp, f.name) is not None}
    return out


def dumps(scn):
    """TOML text; None-valued optional fields are omitted (TOML has no null)."""
    return tomli_w.dumps(scenario_to_dict(scn))


def save_scenario(scn, path):
    Path(path).write_text(dumps(scn))


def _coerce(path, default, value):
    """Match the type of the default; ints stay ints, tuples become tuples."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValidationError(path, f"expected boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(path, f"expected integer, got {value!r}")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool):
            raise ValidationError(path, f"expected number, got {value!r}")
        if isinstance(value, (int, float)):
            return float(value)
        if default is None and isinstance(value, str):
            return value
        raise ValidationError(path, f"expected number, got {value!r}")
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValidationError(path, f"expected string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ValidationError(path, f"expected array, got {value!r}")
        if default and isinstance(default[0], tuple):
            try:
                return tuple(tuple(float(x) for x in row) for row in value)
            except TypeError as exc:
                raise ValidationError(path, "expected array of [threshold_dB, spectral_eff]") from exc
        return tuple(_coerce(path, default[0] if default else 0, x) for x in value)
    raise ValidationError(path, f"unsupported value {value!r}")


def scenario_from_dict(data):
    base = default_scenario()
    kwargs = {}
    for key, value in data.items():
        if key in ("association", "strategy"):
            if not isinstance(value, str):
                raise ValidationError(key, f"expected string, got {value!r}")
            kwargs[key] = value
        elif key in _GROUPS:
            if not isinstance(value, dict):
                raise ValidationError(key, "expected a table")
            grp = getattr(base, key)
            defaults = {f.name: getattr(grp, f.name) for f in fields(grp)}
            upd = {}
            for k, v in value.items():
                if k not in defaults:
                    raise ValidationError(f"{key}.{k}", "unknown key")
                if k == "S_min_table" and isinstance(v, str):
                    upd[k] = load_mcs_table(v)
                else:
                    upd[k] = _coerce(f"{key}.{k}", defaults[k], v)
            kwargs[key] = replace(grp, **upd)
        else:
            raise ValidationError(key, "unknown key")
    return validate(replace(base, **kwargs))


def loads(text):
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"malformed config: {exc}") from exc
    return scenario_from_dict(data)


def load_scenario(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigParseError(f"cannot read {p}: {exc}") from exc
    return loads(text)


def scenario_hash(scn):
    """Short digest of every field; changes iff some field changes."""
    blob = json.dumps(scenario_to_dict(scn, include_none=True), sort_keys=True,
                      separators=(",", ":"), default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def derived_outage_tolerance(scn, T_B):
    return T_B if scn.traffic.T_O is None else scn.traffic.T_O


__all__ = [
    "RadioParams", "AntennaParams", "DeploymentParams", "TrafficParams",
    "MicromobilityParams", "SolverParams", "Scenario", "default_scenario",
    "load_scenario", "save_scenario", "loads", "dumps", "validate",
    "scenario_hash", "load_mcs_table", "ASSOCIATIONS", "STRATEGIES",
]
