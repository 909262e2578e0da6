import csv

from click.testing import CliRunner

from cpt_control.cli import EXIT_CONFIG, main

GOOD = """\
species: SnV
protocols: [orthogonal]
gate_time:
  min_ps: 30
  max_ps: 40
  points: 2
  refine: 0
"""


def _config(tmp_path, text):
    path = tmp_path / "run.yaml"
    path.write_text(text)
    return str(path)


def test_validate_ok(tmp_path):
    res = CliRunner().invoke(main, ["validate-config", "--config", _config(tmp_path, GOOD)])
    assert res.exit_code == 0
    assert res.output.startswith("ok: SnV")


def test_bad_config_exits_with_config_code(tmp_path):
    res = CliRunner().invoke(main, ["validate-config", "--config",
                                    _config(tmp_path, GOOD + "bogus: 1\n")])
    assert res.exit_code == EXIT_CONFIG
    assert "bogus" in res.output


def test_missing_file_is_config_error(tmp_path):
    res = CliRunner().invoke(main, ["validate-config", "--config", str(tmp_path / "none.yaml")])
    assert res.exit_code == EXIT_CONFIG


def test_field_sweep_without_field_section(tmp_path):
    res = CliRunner().invoke(main, ["field-sweep", "--config", _config(tmp_path, GOOD),
                                    "--out", str(tmp_path / "o")])
    assert res.exit_code == EXIT_CONFIG


def test_protocol_scan_writes_csv(tmp_path):
    out = tmp_path / "out"
    res = CliRunner().invoke(main, ["protocol-scan", "--config", _config(tmp_path, GOOD),
                                    "--out", str(out), "--format", "csv"])
    assert res.exit_code == 0, res.output
    rows = list(csv.reader((out / "protocol_scan.csv").open()))
    assert rows[0] == ["angle", "protocol", "optimal_T_s", "infidelity", "leakage_pop"]
    assert len(rows) == 2
    assert rows[1][1] == "orthogonal"
    assert 0 < float(rows[1][3]) < 0.05


def test_correct_over_cap_is_numeric_error(tmp_path):
    text = GOOD + "magnus:\n  k_max: [3]\n"
    res = CliRunner().invoke(main, ["correct", "--config", _config(tmp_path, text),
                                    "--out", str(tmp_path / "e"), "--gate-time-ps", "40"])
    assert res.exit_code == 3
    assert "field cap" in res.output


def test_correct_writes_envelope(tmp_path):
    text = GOOD + "magnus:\n  k_max: [1, 2]\n"
    out = tmp_path / "env"
    res = CliRunner().invoke(main, ["correct", "--config", _config(tmp_path, text),
                                    "--out", str(out), "--gate-time-ps", "40",
                                    "--samples", "5"])
    assert res.exit_code == 0, res.output
    files = sorted(p.name for p in out.iterdir())
    assert files == ["magnus_phi+1.0000pi_laser1.csv"]
    lines = (out / files[0]).read_text().splitlines()
    assert lines[0] == "t_s,in_phase,quadrature" and len(lines) == 6
