import json
import math
import os

import pytest

from loccphase import cli

SCENARIO_DIR = os.path.join(os.path.dirname(cli.__file__), "scenarios")
ZERO_FIELD = os.path.join(SCENARIO_DIR, "two_party_zero_field.scn")
AB_SCENARIO = os.path.join(SCENARIO_DIR, "ab_timedependent.scn")
FORBIDDEN = os.path.join(SCENARIO_DIR, "forbidden_fermion_projector.scn")


def run_cli(capsys, argv):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def report_block(text: str) -> str:
    return text.split(cli.REPORT_FENCE)[1]


def test_run_zero_field_scenario(capsys):
    code, out, _ = run_cli(capsys, ["run", ZERO_FIELD, "--exact"])
    assert code == cli.EXIT_OK
    report = cli.extract_report(out)
    assert report["scenario"]["protocol"] == "two_party"
    assert abs(report["postselection_probability"] - 0.5) < 1e-9
    assert abs(report["phases"]["delta_phi_rad"]) < 1e-9
    assert abs(sum(report["distribution"].values()) - 1.0) < 1e-9


def test_report_is_byte_stable(capsys):
    _, out1, _ = run_cli(capsys, ["run", ZERO_FIELD, "--shots", "2000", "--seed", "5"])
    _, out2, _ = run_cli(capsys, ["run", ZERO_FIELD, "--shots", "2000", "--seed", "5"])
    assert report_block(out1) == report_block(out2)
    _, out3, _ = run_cli(capsys, ["run", ZERO_FIELD, "--shots", "2000", "--seed", "6"])
    assert report_block(out1) != report_block(out3)


def test_report_roundtrips_through_extract(capsys):
    _, out, _ = run_cli(capsys, ["run", ZERO_FIELD, "--exact"])
    report = cli.extract_report(out)
    assert json.loads(json.dumps(report)) == report
    with pytest.raises(ValueError):
        cli.extract_report("no fences here")


def test_shots_mode_reports_an_estimate(capsys):
    code, out, _ = run_cli(capsys, ["run", ZERO_FIELD, "--shots", "5000", "--seed", "3"])
    assert code == cli.EXIT_OK
    report = cli.extract_report(out)
    est = report["estimate"]
    assert abs(est["delta_phi_rad"]) < 4.0 * est["standard_error_rad"]
    total = sum(sum(v.values()) for v in est["counts"].values())
    assert total == 2 * 5000


def test_ab_scenario_recovers_the_flux_phase(capsys):
    code, out, _ = run_cli(capsys, ["run", AB_SCENARIO, "--exact"])
    assert code == cli.EXIT_OK
    report = cli.extract_report(out)
    assert abs(abs(report["phases"]["delta_phi_rad"]) - math.pi / 2.0) < 1e-6


def test_forbidden_projector_exits_with_the_rule_name(capsys):
    code, _, err = run_cli(capsys, ["run", FORBIDDEN])
    assert code == cli.EXIT_FORBIDDEN
    assert "parity" in err
    # with superselection disabled the same scenario runs
    code, out, _ = run_cli(capsys, ["run", FORBIDDEN, "--exact",
                                    "--enforce-ssr", "off"])
    assert code == cli.EXIT_OK


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("mode A 1 fermion\n")
    code, _, err = run_cli(capsys, ["run", str(bad)])
    assert code == cli.EXIT_PARSE
    assert "parse error" in err


def test_validation_error_exit_code(tmp_path, capsys):
    text = """
[registry]
mode A 1 fermion
mode A 2 fermion
mode B 1 fermion
mode B 2 fermion

[measurement]
protocol = n_party
"""
    scn = tmp_path / "nparty.scn"
    scn.write_text(text)
    code, _, err = run_cli(capsys, ["run", str(scn)])
    assert code == cli.EXIT_VALIDATION


def test_decompose_command(capsys):
    code, out, _ = run_cli(capsys, ["decompose", "--x", "0,1,2", "--xp", "1,2,0"])
    assert code == cli.EXIT_OK
    report = cli.extract_report(out)
    assert report["num_brackets"] == 2
    assert report["exact"] is True


def test_gauge_check_command(capsys):
    code, out, _ = run_cli(capsys, ["gauge-check", ZERO_FIELD,
                                    "--chi", "0.3*t*x + 0.1*y**2"])
    assert code == cli.EXIT_OK
    report = cli.extract_report(out)
    assert report["gauge_invariant"] is True
    assert report["max_probability_deviation"] < 1e-8


def test_ab_demo_command(capsys):
    code, out, _ = run_cli(capsys, ["ab-demo", "--theta", str(math.pi / 2.0),
                                    "--flux", "1.0"])
    assert code == cli.EXIT_OK
    report = cli.extract_report(out)
    assert report["deviation_rad"] < 1e-6


def test_tomography_command(tmp_path, capsys):
    text = """
[registry]
mode A 1 fermion
mode A 2 fermion
mode B 1 fermion

[target]
component 1,0,0 0.5 0.0
component 0,1,0 0.5 1.1
component 0,0,1 0.7071067811865476 -2.3

[execution]
shots = exact
"""
    scn = tmp_path / "tomo.scn"
    scn.write_text(text)
    code, out, _ = run_cli(capsys, ["tomography", str(scn)])
    assert code == cli.EXIT_OK
    report = cli.extract_report(out)
    assert report["support"] == ["0,0,1", "0,1,0", "1,0,0"]
    assert abs(report["phases_rad"]["0,0,1"]) < 1e-9
    # relative phases against the anchor component at phase -2.3
    assert abs(report["phases_rad"]["0,1,0"] - (1.1 + 2.3 - 2.0 * math.pi)) < 1e-9
    assert abs(report["phases_rad"]["1,0,0"] - 2.3) < 1e-9
