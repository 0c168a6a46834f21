"""Command-line front end: ``thzmm run | radii | validate``.

Exit codes: 0 success, 1 usage, 2 validation, 3 convergence, 4 I/O.
Worker count for sweeps comes from THZMM_WORKERS (default 1).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import demand, dynamics, radio, scenario, strategies
from .errors import (ConfigParseError, ConvergenceError, GeometryError, SimConfigError,
                     ThzmmError, ValidationError)
from .sim import SimConfig, simulate_scenario

SCHEMA = "thzmm.results/1"
COLUMNS = (
    "scenario_hash", "association", "strategy", "sweep_key", "sweep_value", "mode",
    "pi_N", "pi_O", "pi_O_mmw", "pi_O_thz", "utilization", "N_bar_mmw", "N_bar_thz",
    "outer_iterations", "inner_iterations", "outer_residual", "inner_residual",
    "pi_N_se", "pi_O_se", "pi_O_mmw_se", "pi_O_thz_se", "utilization_se",
    "pi_N_ci", "pi_O_ci", "pi_O_mmw_ci", "pi_O_thz_ci", "utilization_ci", "agreement",
)
_SIM_METRICS = ("pi_N", "pi_O", "pi_O_mmw", "pi_O_thz", "utilization")
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class SweepSpec:
    key: str | None
    values: tuple
    mode: str = "analytic"


def parse_sweep_values(text):
    """'START:STOP:COUNT' (inclusive grid) or a comma-separated list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"bad grid {text!r}; expected START:STOP:COUNT")
        try:
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise UsageError(f"bad grid {text!r}") from exc
        if count < 1:
            raise UsageError("grid count must be >= 1")
        if count == 1:
            return (start,)
        return tuple(float(v) for v in np.linspace(start, stop, count))
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"bad value list {text!r}") from exc


def _parse_scalar(text):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    return text


def apply_value(scn, key, value):
    """Set a dotted-path scalar, keeping the field's type (ints stay ints)."""
    current = scn.get_value(key)
    if not isinstance(current, (int, float, str, type(None))):
        raise ValidationError(key, "not a scalar field")
    if isinstance(current, int) and not isinstance(current, bool):
        if isinstance(value, float):
            if not value.is_integer():
                raise ValidationError(key, f"expected integer, got {value!r}")
            value = int(value)
    elif isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    return scn.with_value(key, value)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _analytic_row(scn, key, value):
    rep = strategies.run(scn)
    c = rep.convergence
    return {
        "scenario_hash": scenario.scenario_hash(scn), "association": scn.association,
        "strategy": scn.strategy, "sweep_key": key or "", "sweep_value": value,
        "mode": "analytic", "pi_N": rep.pi_N, "pi_O": rep.pi_O, "pi_O_mmw": rep.pi_O_mmw,
        "pi_O_thz": rep.pi_O_thz, "utilization": rep.utilization, "N_bar_mmw": rep.N_bar_mmw,
        "N_bar_thz": rep.N_bar_thz, "outer_iterations": c.outer_iterations,
        "inner_iterations": c.inner_iterations, "outer_residual": c.outer_residual,
        "inner_residual": c.inner_residual,
    }


def _sim_row(scn, key, value, cfg, reference=None):
    est = simulate_scenario(scn, cfg)
    row = {
        "scenario_hash": scenario.scenario_hash(scn), "association": scn.association,
        "strategy": scn.strategy, "sweep_key": key or "", "sweep_value": value,
        "mode": "simulate", "N_bar_mmw": est["N_bar_mmw"].mean,
        "N_bar_thz": est["N_bar_thz"].mean,
    }
    for m in _SIM_METRICS:
        row[m] = est[m].mean
        row[f"{m}_se"] = est[m].se
        row[f"{m}_ci"] = est[m].ci95
    if reference is not None:
        ok = all(abs(est[m].mean - reference[m]) <= 3.0 * est[m].se for m in _SIM_METRICS)
        row["agreement"] = "yes" if ok else "no"
    return row


def _point(job):
    scn, key, value, mode, cfg = job
    rows = []
    ref = None
    if mode in ("analytic", "both"):
        ref = _analytic_row(scn, key, value)
        rows.append(ref)
    if mode in ("simulate", "both"):
        rows.append(_sim_row(scn, key, value, cfg, ref))
    return rows


def _workers():
    try:
        return max(1, int(os.environ.get("THZMM_WORKERS", "1")))
    except ValueError:
        return 1


def run_sweep(base, spec, cfg):
    """Rows for every sweep point, in sweep order."""
    jobs = []
    values = spec.values if spec.key else (None,)
    for i, v in enumerate(values):
        scn = apply_value(base, spec.key, v) if spec.key else base
        c = replace(cfg, seed=int(cfg.seed) ^ i)
        jobs.append((scn, spec.key, v, spec.mode, c))
    n = _workers()
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n) as ex:
            chunks = list(ex.map(_point, jobs))
    else:
        chunks = [_point(j) for j in jobs]
    return [r for rows in chunks for r in rows]


def write_rows(rows, fmt, fh):
    if fmt == "csv":
        fh.write(f"# schema: {SCHEMA}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in COLUMNS])
    else:
        fh.write(json.dumps({"schema": SCHEMA, "columns": list(COLUMNS)}) + "\n")
        for r in rows:
            rec = {c: r.get(c) for c in COLUMNS}
            fh.write(json.dumps(rec, allow_nan=True) + "\n")


def _load(path, overrides):
    scn = scenario.load_scenario(path) if path else scenario.default_scenario()
    for item in overrides or ():
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        scn = apply_value(scn, k.strip(), _parse_scalar(v.strip()))
    return scn


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    try:
        return open(path, "w", newline=""), True
    except OSError as exc:
        raise OSError(f"cannot open {path}: {exc}") from exc


# ----------------------------------------------------------------- commands

def cmd_run(args):
    scn = _load(args.config, args.set)
    spec = SweepSpec(args.sweep[0] if args.sweep else None,
                     parse_sweep_values(args.sweep[1]) if args.sweep else (),
                     args.mode)
    if spec.key:
        scn.get_value(spec.key)
    cfg = SimConfig(seed=args.seed, horizon=args.horizon, warmup=args.warmup,
                    replications=args.replications)
    if args.mode != "analytic":
        cfg.resolved(scn.traffic.mu)
    rows = run_sweep(scn, spec, cfg)
    fh, close = _open_out(args.out)
    try:
        write_rows(rows, args.format, fh)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _parse_arrays(text):
    out = []
    for item in text.split(","):
        try:
            v, h = item.lower().split("x")
            out.append((int(v), int(h)))
        except ValueError as exc:
            raise UsageError(f"bad array {item!r}; expected VxH") from exc
    return out


def cmd_radii(args):
    scn = _load(args.config, args.set)
    rows = []
    if args.arrays:
        for dims in _parse_arrays(args.arrays):
            rm = radio.coverage_radii(replace(scn, antenna=replace(scn.antenna, M_B=dims)))
            rt = radio.coverage_radii(replace(scn, antenna=replace(scn.antenna, T_B=dims)))
            rows.append((f"{dims[0]}x{dims[1]}", rm.r_M, rt.r_T_A1, rt.r_T_A2))
    else:
        r = radio.coverage_radii(scn)
        a = scn.antenna
        rows.append((f"{a.M_B[0]}x{a.M_B[1]}/{a.T_B[0]}x{a.T_B[1]}", r.r_M, r.r_T_A1, r.r_T_A2))
    fh, close = _open_out(args.out)
    try:
        fh.write("bs_array,r_M,r_T_A1,r_T_A2\n")
        for name, *vals in rows:
            fh.write(name + "," + ",".join(f"{v:.2f}" for v in vals) + "\n")
    finally:
        if close:
            fh.close()
    return EXIT_OK


def validation_checks(scn):
    """[(name, ok, detail)] for the full invariant suite on one scenario."""
    checks = []

    def check(name, fn):
        try:
            detail = fn()
            checks.append((name, True, detail or ""))
            return True
        except ThzmmError as exc:
            checks.append((getattr(exc, "path", None) or name, False, str(exc)))
            return False

    if not check("scenario.fields", lambda: scenario.validate(scn) and None):
        return checks
    state = {}

    def radii():
        state["radii"] = radio.coverage_radii(scn)
        r = state["radii"]
        if not r.r_T_A1 <= r.r_T_A2:
            raise GeometryError("radio.coverage_radii", "r_T_A1 > r_T_A2")
        return f"r_M={r.r_M:.2f} r_T_A1={r.r_T_A1:.2f} r_T_A2={r.r_T_A2:.2f}"

    if not check("radio.coverage_radii", radii):
        return checks
    r = state["radii"]

    def split():
        p_T, lm, lk = strategies.association_split(scn, r)
        return f"p_T={p_T:.4f}"

    check("association_split.p_T", split)
    r_T = strategies.effective_thz_radius(scn, r)
    for name, fn in (("demand.pmf_native", lambda: demand.demand_pmf_native(scn, r)),
                     ("demand.pmf_rerouted", lambda: demand.demand_pmf_rerouted(scn, r, r_T))):
        def norm(fn=fn, name=name):
            pmf = fn()
            if abs(pmf.total - 1.0) > 1e-9:
                raise GeometryError(name, f"total mass {pmf.total!r} != 1")
            return f"mean={pmf.mean():.4f} infeasible={pmf.infeasible:.3g}"
        check(name, norm)

    def rates():
        ev = dynamics.event_rates(scn, r, r_T_inner=r.r_T_A1, r_T_outer=r_T)
        for f in ("nu", "nu_B", "nu_M", "T_B"):
            v = getattr(ev, f)
            if not (math.isfinite(v) and v >= 0):
                raise GeometryError(f"dynamics.{f}", f"invalid rate {v!r}")
        return f"nu={ev.nu:.4g} nu_B={ev.nu_B:.4g} nu_M={ev.nu_M:.4g}"

    check("dynamics.rates", rates)
    if all(ok for _, ok, _ in checks):
        def solve():
            rep = strategies.run(scn)
            return f"pi_N={rep.pi_N:.3g} pi_O={rep.pi_O:.4f}"
        check("strategies.run", solve)
    return checks


def cmd_validate(args):
    try:
        scn = _load(args.config, args.set)
    except ValidationError as exc:
        print(f"FAIL {exc.path}: {exc}")
        return EXIT_VALIDATION
    checks = validation_checks(scn)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}" + (f": {detail}" if detail else ""))
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_VALIDATION


# --------------------------------------------------------------------- main

def build_parser():
    p = argparse.ArgumentParser(prog="thzmm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="TOML scenario file (defaults if omitted)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one dotted-path field; repeatable")
        sp.add_argument("--out", help="output file (stdout if omitted)")

    r = sub.add_parser("run", help="evaluate one scenario or a sweep")
    common(r)
    r.add_argument("--sweep", nargs=2, metavar=("KEY", "VALUES"),
                   help="dotted key and START:STOP:COUNT or v1,v2,...")
    r.add_argument("--mode", choices=("analytic", "simulate", "both"), default="analytic")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--replications", type=int, default=20)
    r.add_argument("--horizon", type=float, default=None, help="simulated seconds")
    r.add_argument("--warmup", type=float, default=None, help="simulated seconds")
    r.add_argument("--format", choices=("csv", "ndjson"), default="csv")
    r.set_defaults(func=cmd_run)

    d = sub.add_parser("radii", help="coverage radii")
    common(d)
    d.add_argument("--arrays", help="BS arrays, e.g. 8x4,16x4,32x4")
    d.set_defaults(func=cmd_radii)

    v = sub.add_parser("validate", help="run the invariant suite")
    common(v)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc.__cause__, OSError) else EXIT_VALIDATION
    except (ValidationError, GeometryError, SimConfigError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ThzmmError as exc:
        print(f"{exc.module} error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
