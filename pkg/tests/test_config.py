import numpy as np
import pytest
import yaml

from cpt_control.config import ConfigError, load_config, parse_config
from cpt_control.pulses import FIELD_CAPS

BASE = """\
species: SnV
protocols: [naive, orthogonal]
angles_pi: [1, 0.5]
gate_time:
  min_ps: 20
  max_ps: 80
  points: 4
"""


def _write(tmp_path, text):
    path = tmp_path / "run.yaml"
    path.write_text(text)
    return path


def test_minimal_config_units(tmp_path):
    cfg = load_config(_write(tmp_path, BASE))
    assert cfg.species == "SnV"
    assert cfg.angles == pytest.approx((np.pi, np.pi / 2))
    assert cfg.gate_times()[0] == pytest.approx(20e-12)
    assert cfg.gate_times()[-1] == pytest.approx(80e-12)
    assert cfg.protocols == ("naive", "orthogonal")


def test_unknown_key_reports_path_and_line(tmp_path):
    text = BASE + "integrator:\n  rtol: 1.0e-8\n  method: rk4\n"
    with pytest.raises(ConfigError) as info:
        load_config(_write(tmp_path, text))
    assert info.value.path == "integrator.method"
    assert info.value.line == 10
    assert "line 10" in str(info.value)


def test_missing_species():
    with pytest.raises(ConfigError, match="missing required key"):
        parse_config({"seed": 1})


def test_unknown_species():
    with pytest.raises(ConfigError, match="unknown species"):
        parse_config({"species": "NV"})


def test_empty_angle_list():
    with pytest.raises(ConfigError, match="angle list is empty"):
        parse_config({"species": "SiV", "angles_pi": []})


@pytest.mark.parametrize("bad", [0, 2, "pi", True])
def test_bad_angles(bad):
    with pytest.raises(ConfigError):
        parse_config({"species": "SiV", "angles_pi": [bad]})


def test_zero_point_grid():
    data = {"species": "SiV", "field": {"b_par_T": {"min": -1, "max": 1, "points": 0},
                                       "b_perp_T": {"min": -1, "max": 1, "points": 3}}}
    with pytest.raises(ConfigError, match="at least one point") as info:
        parse_config(data)
    assert info.value.path == "field.b_par_T"


def test_wrong_type_rejected():
    with pytest.raises(ConfigError, match="expected a number"):
        parse_config({"species": "SiV", "sigma_t0": "six"})


def test_laser_over_cap_rejected():
    data = {"species": "SiV", "laser": {"field_V_per_m": 2 * FIELD_CAPS["SiV"]}}
    with pytest.raises(ConfigError, match="exceeds"):
        parse_config(data)
    cfg = parse_config({**data, "allow_over_cap": True})
    assert cfg.laser_field == pytest.approx(2 * FIELD_CAPS["SiV"])


def test_laser_needs_exactly_one_source():
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config({"species": "SiV", "laser": {}})


def test_plane_auto_and_invalid():
    grid = {"min": 0.1, "max": 1, "points": 2}
    cfg = parse_config({"species": "SnV",
                        "field": {"b_par_T": grid, "b_perp_T": grid, "plane": "auto"}})
    choice = cfg.lambda_choice(True)
    assert choice.plane == "auto"
    assert choice.legs == ("A1", "A3")
    assert cfg.lambda_choice(False).plane == "yz"
    with pytest.raises(ConfigError, match="plane must be"):
        parse_config({"species": "SnV",
                      "field": {"b_par_T": grid, "b_perp_T": grid, "plane": "zz"}})


def test_field_points_order():
    grid = {"min": 0, "max": 1, "points": 2}
    cfg = parse_config({"species": "SiV", "field": {"b_par_T": grid, "b_perp_T": grid}})
    pts = [(f.b_par, f.b_perp) for f in cfg.field_points()]
    assert pts == [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]


def test_rescale_bound_and_k_max():
    with pytest.raises(ConfigError, match=r"\|c\| < 4"):
        parse_config({"species": "SiV", "drag": {"rescale": {"min": -4, "max": 1, "points": 3}}})
    with pytest.raises(ConfigError, match="k_max"):
        parse_config({"species": "SiV", "magnus": {"k_max": [0, 2]}})
    cfg = parse_config({"species": "SiV", "magnus": {"k_max": [2, 3]}})
    assert cfg.corrections.k_max_values == (2, 3)


def test_invalid_yaml_reports_line(tmp_path):
    with pytest.raises(ConfigError, match="invalid YAML") as info:
        load_config(_write(tmp_path, "species: SiV\nmodel: [1, 2\n"))
    assert info.value.line is not None


def test_digest_is_stable(tmp_path):
    a = load_config(_write(tmp_path, BASE))
    b = parse_config(yaml.safe_load(BASE))
    assert a.digest() == b.digest()
    assert a.digest() != parse_config({**yaml.safe_load(BASE), "seed": 3}).digest()


def test_power_input_converted():
    cfg = parse_config({"species": "SnV", "laser": {"power_W": 1e-4, "wavelength_nm": 619}})
    assert 0 < cfg.laser_field < FIELD_CAPS["SnV"]


def test_exponent_without_sign_is_a_number(tmp_path):
    text = BASE + "laser:\n  field_V_per_m: 8.0e4\nintegrator:\n  rtol: 1e-9\n"
    cfg = load_config(_write(tmp_path, text))
    assert cfg.laser_field == 8.0e4
    assert cfg.rtol == 1e-9
