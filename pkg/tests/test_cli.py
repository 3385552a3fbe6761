import csv
import math
from pathlib import Path

import pytest

from gridcert.cli import ParseError, ValidationError, main, parse_network
from gridcert.devices import ConverterParams, MachineParams

CASES = Path(__file__).resolve().parents[1] / "cases"


def write(tmp_path, text, name="net.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


MINIMAL = """
format_version = 1

[system]
f0_hz = 60.0

[[bus]]
id = "a"
device = "droop"
m_p = 0.05
T_p = 3.0

[[bus]]
id = "b"
device = "droop"
m_p = 0.05
T_p = 3.0

[[line]]
from = "a"
to = "b"
r_pu = 0.01147
x_pu = 0.05
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_parse_two_bus_network(tmp_path):
    spec, cfg, rho_floor = parse_network(write(tmp_path, MINIMAL))
    assert len(spec.buses) == 2
    assert len(spec.lines) == 1
    assert isinstance(spec.buses["a"], ConverterParams)
    assert spec.omega0 == pytest.approx(2 * math.pi * 60)
    assert rho_floor == 0.0


def test_parse_damper_circuit_map():
    spec, _, _ = parse_network(CASES / "sg_bode_damper.toml")
    sg = spec.buses["sg"]
    assert isinstance(sg, MachineParams)
    assert abs(sg.xi_sm - 0.0131) / 0.0131 < 0.02


def test_parse_duplicate_bus_id(tmp_path):
    bad = MINIMAL.replace('id = "b"', 'id = "a"')
    with pytest.raises(ValidationError, match="duplicate"):
        parse_network(write(tmp_path, bad))


def test_parse_malformed_toml(tmp_path):
    with pytest.raises(ParseError):
        parse_network(write(tmp_path, "format_version = [unclosed"))


def test_parse_rejects_inconsistent_reactance(tmp_path):
    bad = MINIMAL.replace("x_pu = 0.05", "x_pu = 0.05\nl_pu = 0.06")
    with pytest.raises(ValidationError, match="disagree"):
        parse_network(write(tmp_path, bad))


def test_parse_rejects_lossless_line_without_floor(tmp_path):
    bad = MINIMAL.replace("r_pu = 0.01147", "r_pu = 0.0")
    with pytest.raises(ValidationError, match="lossless"):
        parse_network(write(tmp_path, bad))
    ok = bad.replace("[system]", "[certify]\nrho_floor = 0.02\n\n[system]")
    spec, cfg, rho_floor = parse_network(write(tmp_path, ok, "ok.toml"))
    assert rho_floor == 0.02


def test_parse_no_buses(tmp_path):
    with pytest.raises(ValidationError):
        parse_network(write(tmp_path, "format_version = 1\n\n[system]\nf0_hz = 60.0\n"))


def test_certify_exit_codes(tmp_path):
    assert main(["certify", str(CASES / "pd_plant.toml"),
                 "--out", str(tmp_path / "pd")]) == 0
    assert main(["certify", str(CASES / "droop_plant.toml"),
                 "--out", str(tmp_path / "dr")]) == 1
    bad = write(tmp_path, "format_version = [unclosed")
    assert main(["certify", str(bad), "--out", str(tmp_path)]) == 2


def test_certify_report_files(tmp_path):
    main(["certify", str(CASES / "droop_plant.toml"), "--out", str(tmp_path)])
    text = (tmp_path / "report.txt").read_text()
    assert "NOT CERTIFIED" in text
    rows = read_csv(tmp_path / "report.csv")
    fails = [r for r in rows if r["margin_pass"] == "0"]
    assert fails and all(r["bus"].startswith("vsc") for r in fails)
    assert all(float(r["rho"]) == pytest.approx(0.2294) for r in fails)


def test_csv_outputs_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        main(["certify", str(CASES / "two_bus_droop.toml"), "--out", str(out)])
        main(["sweep", str(CASES / "vsc_bode_damper.toml"), "--out", str(out),
              "--grid-n", "500"])
    assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()
    sweeps = sorted(p.name for p in a.glob("sweep_*.csv"))
    assert sweeps
    for name in sweeps:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_sg_damper_crossover_annotations_differ(tmp_path):
    main(["sweep", str(CASES / "sg_bode_no_damper.toml"), "--out", str(tmp_path),
          "--grid-n", "800"])
    main(["sweep", str(CASES / "sg_bode_damper.toml"), "--out", str(tmp_path),
          "--grid-n", "800"])
    files = sorted(tmp_path.glob("sweep_sg_*.csv"))
    assert len(files) == 1  # same bus id and rho: second run overwrites
    # rerun into separate dirs to compare summaries
    out0, out1 = tmp_path / "no_dw", tmp_path / "dw"
    main(["sweep", str(CASES / "sg_bode_no_damper.toml"), "--out", str(out0),
          "--grid-n", "800"])
    main(["sweep", str(CASES / "sg_bode_damper.toml"), "--out", str(out1),
          "--grid-n", "800"])

    def summary(d):
        rows = read_csv(next(iter(d.glob("sweep_sg_*.csv"))))
        return [r for r in rows if r["row"] == "summary"][0]

    s0, s1 = summary(out0), summary(out1)
    assert float(s1["omega_c_rad_s"]) > 10 * float(s0["omega_c_rad_s"])
    assert float(s1["margin"]) > float(s0["margin"])


def test_sweep_vsc_damper_margin_increase(tmp_path):
    out0, out1 = tmp_path / "ref", tmp_path / "dw"
    main(["sweep", str(CASES / "vsc_bode_no_damper.toml"), "--out", str(out0),
          "--grid-n", "800"])
    main(["sweep", str(CASES / "vsc_bode_damper.toml"), "--out", str(out1),
          "--grid-n", "800"])

    def margin(d):
        rows = read_csv(next(iter(d.glob("sweep_vsc_*.csv"))))
        return float([r for r in rows if r["row"] == "summary"][0]["margin"])

    assert margin(out1) > margin(out0)  # xi_c = 0.003 raises the margin


def test_sweep_empty_input_is_error(tmp_path):
    empty = write(tmp_path, "format_version = 1\n\n[system]\nf0_hz = 60.0\n")
    assert main(["sweep", str(empty), "--out", str(tmp_path)]) == 2


def test_margin_subcommand(tmp_path):
    code = main(["margin", str(CASES / "droop_plant.toml"), "--out", str(tmp_path)])
    assert code == 1  # margin failures at the upper R/X extreme
    rows = read_csv(tmp_path / "margins.csv")
    assert {r["bus"] for r in rows} == {"sg1", "sg2", "vsc1", "vsc2", "vsc3", "vsc4"}
    assert len(rows) == 12  # both rho extremes per bus
    fail = [r for r in rows if r["margin_pass"] == "0"]
    assert fail and all(float(r["rho"]) == pytest.approx(0.2294) for r in fail)


def test_simulate_subcommand(tmp_path):
    code = main(["simulate", str(CASES / "vsc_pair_pd.toml"), "--out", str(tmp_path),
                 "--bus", "vsc1", "--magnitude", "0.5", "--t-end", "5.0"])
    assert code == 0
    rows = read_csv(tmp_path / "sim_vsc_pair_pd.csv")
    assert "omega_vsc1_rad_s" in rows[0]
    assert float(rows[0]["t_s"]) == 0.0
    # load step drives frequency down
    assert float(rows[-1]["omega_vsc1_rad_s"]) < 0


def test_design_subcommand(tmp_path):
    code = main(["design", str(CASES / "pd_plant.toml"), "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "design.csv")
    conv = [r for r in rows if r["kind"] == "converter"]
    mach = [r for r in rows if r["kind"] == "machine"]
    assert conv and mach
    assert all(float(r["xi_indicator"]) > 0 for r in conv)
    for r in mach:
        assert float(r["xi_improve_low_s"]) < 0.0131 < float(r["xi_improve_high_s"])


def test_unknown_device_kind(tmp_path):
    bad = MINIMAL.replace('device = "droop"', 'device = "statcom"', 1)
    assert main(["certify", str(write(tmp_path, bad)), "--out", str(tmp_path)]) == 2
