"""Command-line driver: parse network files, run certification, margin
tables, Bode sweeps, load-step simulations and design formulas, and emit
deterministic CSV/text reports.

Input is a TOML document::

    format_version = 1

    [system]
    f0_hz = 60.0

    [certify]          # optional overrides
    delta = 0.01
    grid_lo = 1e-3
    grid_hi = 1e5
    grid_n = 4000
    rho_floor = 0.0    # > 0 clamps lossless branches instead of refusing

    [[bus]]
    id = "sg1"
    device = "sg"      # sg | sc | droop | pd_droop | passive
    H = 3.7
    T_G = 3.0
    k_g = 20.0
    xi_sm = 0.0131
    # or derive it from the damper circuit (per unit, system base):
    # damper = { L_Dd = 0.182, R_Dd = 0.0117, L_ad_sub = 0.0662, L_aq_sub = 0.1858 }

    [[line]]
    from = "sg1"
    to = "bus7"
    r_pu = 0.01
    x_pu = 0.1         # per-unit reactance; equals l_pu at base frequency

Exit codes for ``certify``: 0 = CERTIFIED, 1 = NOT CERTIFIED, 2 = error.
``margin`` mirrors that contract on the margin tests alone; the other
subcommands use 0 = success, 2 = error.

Frequencies are Hz at this boundary only; every internal quantity and
every CSV column labeled rad/s stays in rad/s.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import certify as cert
from . import sim
from .devices import (
    ConverterParams,
    DamperCircuitParams,
    DeviceError,
    LineDynamicsParams,
    MachineParams,
    bus_transfer,
    mu,
    xi_sm,
)
from .network import LineParams, NetworkError, NetworkSpec, ReducedNetwork, reduce_network
from .tfcore import TFError, combine, evaluate


class ParseError(Exception):
    """Input file is not well-formed TOML (message carries line/column)."""


class ValidationError(Exception):
    """Input parses but violates a model invariant."""


FORMAT_VERSION = 1
SIG_DIGITS = 12


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.{SIG_DIGITS}g}"
    return str(x)


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ValidationError(f"{where}: missing required key {key!r}")
    return table[key]


def _num(table: dict, key: str, where: str, default=None):
    if key not in table:
        if default is None:
            raise ValidationError(f"{where}: missing required key {key!r}")
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{where}: {key} must be a number, got {v!r}")
    return float(v)


def _machine_xi(table: dict, where: str, omega0: float) -> float:
    if "damper" in table and "xi_sm" in table:
        raise ValidationError(f"{where}: give either xi_sm or a damper table, not both")
    if "damper" in table:
        d = table["damper"]
        p = DamperCircuitParams(
            l_dd=_num(d, "L_Dd", where),
            r_dd=_num(d, "R_Dd", where),
            l_ad_sub=_num(d, "L_ad_sub", where),
            l_aq_sub=_num(d, "L_aq_sub", where),
            omega_base=omega0,
        )
        return xi_sm(p)
    return _num(table, "xi_sm", where, default=0.0)


def _parse_bus(table: dict, omega0: float):
    bus_id = _require(table, "id", "[[bus]]")
    if not isinstance(bus_id, str) or not bus_id:
        raise ValidationError("[[bus]]: id must be a nonempty string")
    where = f"bus {bus_id!r}"
    kind = _require(table, "device", where)
    try:
        if kind == "passive":
            return bus_id, None
        if kind == "sg":
            return bus_id, MachineParams(
                H=_num(table, "H", where),
                T_G=_num(table, "T_G", where),
                k_g=_num(table, "k_g", where),
                xi_sm=_machine_xi(table, where, omega0),
                omega0=omega0,
            )
        if kind == "sc":
            return bus_id, MachineParams(
                H=_num(table, "H", where),
                xi_sm=_machine_xi(table, where, omega0),
                omega0=omega0,
                is_condenser=True,
            )
        if kind == "droop":
            return bus_id, ConverterParams(
                m_p=_num(table, "m_p", where),
                T_p=_num(table, "T_p", where),
                omega0=omega0,
            )
        if kind == "pd_droop":
            return bus_id, ConverterParams(
                m_p=_num(table, "m_p", where),
                T_p=_num(table, "T_p", where),
                xi_c=_num(table, "xi_c", where),
                omega0=omega0,
            )
    except (ValueError, DeviceError) as exc:
        raise ValidationError(f"{where}: {exc}") from exc
    raise ValidationError(f"{where}: unknown device kind {kind!r}")


def _parse_line(table: dict) -> LineParams:
    frm = _require(table, "from", "[[line]]")
    to = _require(table, "to", "[[line]]")
    where = f"line {frm}-{to}"
    has_x = "x_pu" in table
    has_l = "l_pu" in table
    if not has_x and not has_l:
        raise ValidationError(f"{where}: needs x_pu or l_pu")
    x = _num(table, "x_pu", where) if has_x else None
    l = _num(table, "l_pu", where) if has_l else None
    # per-unit reactance equals per-unit inductance at base frequency
    if has_x and has_l and abs(x - l) > 1e-9 * max(abs(x), abs(l)):
        raise ValidationError(f"{where}: x_pu and l_pu disagree ({x} vs {l})")
    try:
        return LineParams(frm, to, r_pu=_num(table, "r_pu", where),
                          l_pu=l if has_l else x)
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def parse_network(path: str | Path):
    """Parse and validate a network file.

    Returns (NetworkSpec, CertificationConfig, rho_floor).  Raises
    :class:`ParseError` for malformed TOML and :class:`ValidationError`
    for the first violated model invariant.
    """
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc

    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: format_version must be {FORMAT_VERSION}")
    system = raw.get("system")
    if not isinstance(system, dict):
        raise ValidationError(f"{path}: missing [system] section")
    f0 = _num(system, "f0_hz", "[system]")
    if f0 <= 0:
        raise ValidationError("[system]: f0_hz must be positive")
    omega0 = 2 * math.pi * f0

    buses = {}
    for table in raw.get("bus", []):
        bus_id, dev = _parse_bus(table, omega0)
        if bus_id in buses:
            raise ValidationError(f"duplicate bus id {bus_id!r}")
        buses[bus_id] = dev
    if not buses:
        raise ValidationError(f"{path}: no [[bus]] entries")
    lines = [_parse_line(t) for t in raw.get("line", [])]

    try:
        spec = NetworkSpec(buses=buses, lines=lines, omega0=omega0)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc

    over = raw.get("certify", {})
    rho_floor = _num(over, "rho_floor", "[certify]", default=0.0)
    cfg = cert.CertificationConfig(
        delta=_num(over, "delta", "[certify]", default=1e-2),
        omega_lo=_num(over, "grid_lo", "[certify]", default=1e-3),
        omega_hi=_num(over, "grid_hi", "[certify]", default=1e5),
        omega_n=int(_num(over, "grid_n", "[certify]", default=4000)),
        omega1=over.get("omega1"),
        omega2=over.get("omega2"),
    )

    # surface structural problems (disconnection, lossless branches) now,
    # naming the first violated invariant
    try:
        reduce_network(spec, rho_floor=rho_floor)
    except (NetworkError, DeviceError) as exc:
        raise ValidationError(str(exc)) from exc
    return spec, cfg, rho_floor


def _apply_overrides(cfg: cert.CertificationConfig, args) -> cert.CertificationConfig:
    kw = dict(
        delta=args.delta if args.delta is not None else cfg.delta,
        omega_lo=args.grid_lo if args.grid_lo is not None else cfg.omega_lo,
        omega_hi=args.grid_hi if args.grid_hi is not None else cfg.omega_hi,
        omega_n=args.grid_n if args.grid_n is not None else cfg.omega_n,
        omega1=args.omega1 if args.omega1 is not None else cfg.omega1,
        omega2=args.omega2 if args.omega2 is not None else cfg.omega2,
    )
    return cert.CertificationConfig(**kw)


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# certify


def _report_text(reduced: ReducedNetwork, report: cert.CertificationReport) -> str:
    out = []
    w = out.append
    w("gridcert certification report")
    w(f"buses: {', '.join(reduced.nodes)}")
    for bus in reduced.nodes:
        dev = reduced.device(bus)
        if isinstance(dev, ConverterParams):
            w(f"  {bus}: converter m_p={_fmt(dev.m_p)} T_p={_fmt(dev.T_p)} s"
              f" xi_c={_fmt(dev.xi_c)} s ({_fmt(dev.xi_c * dev.omega0)} pu)")
        else:
            kind = "condenser" if dev.is_condenser else "generator"
            w(f"  {bus}: {kind} H={_fmt(dev.H)} s T_G={_fmt(dev.T_G)} s"
              f" k_g={_fmt(dev.k_g)} xi_sm={_fmt(dev.xi_sm)} s"
              f" ({_fmt(dev.xi_sm * dev.omega0)} pu)")
    w(f"rho extremes: {_fmt(reduced.rho_min)} / {_fmt(reduced.rho_max)}")
    w(f"lambda2(L') = {_fmt(float(reduced.lambda2))}")
    for note in report.notes:
        w(f"note: {note}")
    for run in report.runs:
        w("")
        w(f"--- run at rho = {_fmt(run.rho)} (delta = {_fmt(run.delta)}) ---")
        for err in run.errors:
            w(f"  error: {err}")
        if run.cond1 is not None:
            c1 = run.cond1
            w(f"  condition 1 (synchronous & coherent): {'PASS' if c1.ok else 'FAIL'}"
              f"  M1={_fmt(c1.M1)} M2={_fmt(c1.M2)}"
              f" |s/mu|max={_fmt(c1.lhs_max)} bound={_fmt(c1.bound)}")
            for note in c1.notes:
                w(f"    note: {note}")
        for p in run.cond2_poles:
            if p.ok:
                w(f"  condition 2.1 poles [{p.bus}]: PASS")
            else:
                w(f"  condition 2.1 poles [{p.bus}]: FAIL witnesses "
                  + ", ".join(_fmt(abs(r)) + "@" + _fmt(r.real) for r in p.witnesses))
        if run.cond2_interop is not None:
            io_ = run.cond2_interop
            if io_.ok:
                w("  condition 2.2 halfplane feasibility: PASS"
                  f"  tightest window {_fmt(io_.min_width)} rad at |s|="
                  f"{_fmt(abs(io_.tightest_s))}, witness phi={_fmt(io_.witness_phi)}")
            else:
                w("  condition 2.2 halfplane feasibility: FAIL at s = "
                  f"{_fmt(io_.first_fail_s.real)}+{_fmt(io_.first_fail_s.imag)}j")
        if run.cond3 is not None:
            c3 = run.cond3
            w(f"  condition 3 regions (omega1={_fmt(c3.omega1)}, "
              f"omega2={_fmt(c3.omega2)} rad/s):")
            for name, reg in (("1", c3.region1), ("2", c3.region2), ("3", c3.region3)):
                if reg.ok:
                    w(f"    region {name}: PASS")
                else:
                    w(f"    region {name}: FAIL at omega={_fmt(reg.first_fail_omega)} "
                      f"rad/s bus={reg.first_fail_bus}")
        w("  margins:")
        for m in run.margins:
            w(f"    {m.bus}: gamma={_fmt(m.gamma_n)} omega_c={_fmt(m.omega_c)} rad/s"
              f" M={_fmt(m.margin)} -> {'PASS' if m.ok else 'FAIL'}"
              f" resonance={'PASS' if m.resonance_ok else 'FAIL'}")
        w(f"  run verdict: {'PASS' if run.ok else 'FAIL'}")
    w("")
    w(f"VERDICT: {'CERTIFIED' if report.certified else 'NOT CERTIFIED'}")
    w("")
    return "\n".join(out)


def _report_rows(reduced: ReducedNetwork, report: cert.CertificationReport):
    rows = []
    for run in report.runs:
        poles = {p.bus: p.ok for p in run.cond2_poles}
        for m in run.margins:
            c3 = run.cond3
            rows.append([
                m.bus, run.rho, m.gamma_n, m.omega_c, m.margin, m.ok,
                m.resonance_ok, poles.get(m.bus, False),
                run.cond1.ok if run.cond1 is not None else False,
                run.cond2_interop.ok if run.cond2_interop is not None else False,
                c3.region1.ok if c3 is not None else False,
                c3.region2.ok if c3 is not None else False,
                c3.region3.ok if c3 is not None else False,
            ])
    return rows


REPORT_HEADER = [
    "bus", "rho", "gamma", "omega_c_rad_s", "margin", "margin_pass",
    "resonance_pass", "cond2_poles_pass", "cond1_pass", "cond2_interop_pass",
    "region1_pass", "region2_pass", "region3_pass",
]


def run_certify(args) -> int:
    spec, cfg, rho_floor = parse_network(args.file)
    cfg = _apply_overrides(cfg, args)
    reduced = reduce_network(spec, rho_floor=rho_floor)
    report = cert.certify(reduced, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(_report_text(reduced, report))
    _write_csv(out / "report.csv", REPORT_HEADER, _report_rows(reduced, report))
    print((out / "report.txt").read_text(), end="")
    return 0 if report.certified else 1


# ---------------------------------------------------------------------------
# margin


def run_margin(args) -> int:
    spec, cfg, rho_floor = parse_network(args.file)
    cfg = _apply_overrides(cfg, args)
    reduced = reduce_network(spec, rho_floor=rho_floor)
    rows = []
    all_ok = True
    for rho in _rho_list(reduced):
        mu_tf = mu(LineDynamicsParams(rho=rho, omega0=reduced.omega0))
        for bus in reduced.nodes:
            g = bus_transfer(reduced.device(bus))
            gamma_n = reduced.gamma_of(bus)
            wc, margin = cert.stability_margin(g, mu_tf, cfg)
            res = cert.resonance_check(g, mu_tf, gamma_n, wc, rho, reduced.omega0)
            ok = bool(margin > gamma_n) and res.ok
            all_ok = all_ok and ok
            rows.append([bus, rho, gamma_n, wc, wc / (2 * math.pi), margin,
                         bool(margin > gamma_n), res.ok])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "margins.csv",
               ["bus", "rho", "gamma", "omega_c_rad_s", "f_c_hz", "margin",
                "margin_pass", "resonance_pass"], rows)
    for r in rows:
        print("  ".join(_fmt(v) for v in r))
    return 0 if all_ok else 1


def _rho_list(reduced: ReducedNetwork) -> list[float]:
    if reduced.rho_max > reduced.rho_min:
        return [reduced.rho_min, reduced.rho_max]
    return [reduced.rho_min]


# ---------------------------------------------------------------------------
# sweep


SWEEP_HEADER = [
    "row", "omega_rad_s", "mag", "phase_deg", "re_positive", "gain_lt_one",
    "region", "omega_c_rad_s", "margin", "gamma",
]


def run_sweep(args) -> int:
    spec, cfg, rho_floor = parse_network(args.file)
    cfg = _apply_overrides(cfg, args)
    reduced = reduce_network(spec, rho_floor=rho_floor)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    w = cfg.grid()
    for rho in _rho_list(reduced):
        mu_tf = mu(LineDynamicsParams(rho=rho, omega0=reduced.omega0))
        sm = {bus: cert.stability_margin(bus_transfer(reduced.device(bus)),
                                         mu_tf, cfg)
              for bus in reduced.nodes}
        finite = [x for x, _ in sm.values() if math.isfinite(x) and x > 0]
        om1 = min(finite) if finite else cfg.omega_hi
        om2 = max(finite) if finite else cfg.omega_hi
        for bus in reduced.nodes:
            g_raw = bus_transfer(reduced.device(bus))
            gamma_n = reduced.gamma_of(bus)
            # single-bus networks have no coupling (gamma = 0); sweep the
            # raw device response then
            g = combine(g_raw, kind="scale", c=gamma_n) if gamma_n > 0 else g_raw
            z = evaluate(mu_tf, 1j * w) * evaluate(g, 1j * w)
            phase = np.rad2deg(np.unwrap(np.angle(z)))
            gain = np.abs(z) / w
            wc, margin = sm[bus]
            rows = []
            for k in range(w.size):
                region = 1 if w[k] < om1 else (2 if w[k] < om2 else 3)
                rows.append([
                    "data", w[k], gain[k], phase[k],
                    bool(z[k].real > 0), bool(gain[k] < 1), region,
                    None, None, None,
                ])
            rows.append(["summary", None, None, None, None, None, None,
                         wc, margin, gamma_n])
            name = f"sweep_{bus}_rho{_fmt(round(rho, 6))}.csv"
            _write_csv(out / name, SWEEP_HEADER, rows)
            print(f"wrote {out / name}")
    return 0


# ---------------------------------------------------------------------------
# simulate


def run_simulate(args) -> int:
    spec, cfg, rho_floor = parse_network(args.file)
    reduced = reduce_network(spec, rho_floor=rho_floor)
    bus = args.bus or reduced.nodes[0]
    if bus not in reduced.nodes:
        raise ValidationError(f"unknown disturbance bus {bus!r}")
    rho = args.rho if args.rho is not None else reduced.rho_max
    cl = sim.assemble(reduced, rho)
    result = sim.step_response(cl, bus, args.magnitude, args.t_end, dt=args.dt)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"sim_{Path(args.file).stem}.csv"
    header = (["t_s"] + [f"omega_{b}_rad_s" for b in reduced.nodes]
              + [f"p_net_{b}_pu" for b in reduced.nodes])
    rows = []
    for k in range(result.t.size):
        rows.append([result.t[k]] + list(result.omega[:, k]) + list(result.p_net[:, k]))
    _write_csv(out / name, header, rows)
    print(f"wrote {out / name}")
    print(f"dominant eigenvalue (excl. drift): {_fmt(result.dominant_eig.real)}"
          f" + {_fmt(result.dominant_eig.imag)}j")
    if result.metrics is not None:
        m = result.metrics
        print(f"peak frequency spread: {_fmt(m.spread)} rad/s")
        print(f"fitted growth rate: {_fmt(m.growth_rate)} 1/s")
        print(f"spread oscillation rate: {_fmt(m.dominant_freq_hz)} Hz")
    return 0


# ---------------------------------------------------------------------------
# design


def run_design(args) -> int:
    spec, cfg, rho_floor = parse_network(args.file)
    cfg = _apply_overrides(cfg, args)
    reduced = reduce_network(spec, rho_floor=rho_floor)
    rows = []
    for rho in _rho_list(reduced):
        mu_tf = mu(LineDynamicsParams(rho=rho, omega0=reduced.omega0))
        for bus in reduced.nodes:
            dev = reduced.device(bus)
            gamma_n = reduced.gamma_of(bus)
            if isinstance(dev, ConverterParams):
                d = cert.droop_design(dev, rho, gamma_n)
                rows.append([bus, "converter", rho, gamma_n, d.omega_c_closed,
                             d.tp_min, d.tp_bound_applies, d.xi_indicator,
                             None, None, None, None])
            else:
                base = MachineParams(H=dev.H, T_G=dev.T_G, k_g=dev.k_g,
                                     xi_sm=0.0, omega0=dev.omega0,
                                     is_condenser=dev.is_condenser)
                wc0 = cert.crossover_frequency(bus_transfer(base), mu_tf, cfg)
                if dev.xi_sm > 0 and 0 < rho < 1 and math.isfinite(wc0) and wc0 > 0:
                    est = cert.sg_margin_estimates(dev, rho, wc0)
                    rows.append([bus, "machine", rho, gamma_n, None, None,
                                 None, None, est.m_no_dw, est.m_dw,
                                 est.xi_low, est.xi_high])
                else:
                    rows.append([bus, "machine", rho, gamma_n, None, None,
                                 None, None, None, None, None, None])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "design.csv",
               ["bus", "kind", "rho", "gamma", "omega_c_closed_rad_s", "tp_min_s",
                "tp_bound_applies", "xi_indicator", "m_est_no_damper",
                "m_est_damper", "xi_improve_low_s", "xi_improve_high_s"], rows)
    for r in rows:
        print("  ".join(_fmt(v) for v in r))
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gridcert",
        description="small-signal frequency-stability certification for "
                    "mixed machine/converter grids",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("file", help="network description (TOML)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--delta", type=float, default=None)
        sp.add_argument("--grid-lo", type=float, default=None)
        sp.add_argument("--grid-hi", type=float, default=None)
        sp.add_argument("--grid-n", type=int, default=None)
        sp.add_argument("--omega1", type=float, default=None)
        sp.add_argument("--omega2", type=float, default=None)
        sp.add_argument("--rho-policy", choices=["extremes"], default="extremes",
                        help="certification runs at both R/X extremes")

    for name, fn in (("certify", run_certify), ("margin", run_margin),
                     ("sweep", run_sweep), ("design", run_design)):
        sp = sub.add_parser(name)
        common(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("simulate")
    common(sp)
    sp.add_argument("--bus", default=None, help="disturbance bus (default: first)")
    sp.add_argument("--magnitude", type=float, default=0.5, help="load step, p.u.")
    sp.add_argument("--t-end", type=float, default=30.0)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--rho", type=float, default=None,
                    help="R/X ratio for the line model (default: rho_max)")
    sp.set_defaults(func=run_simulate)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, NetworkError, DeviceError, TFError,
            cert.CertifyError, sim.SimError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
