import json
from dataclasses import replace

import numpy as np
import pytest

from cpt_control.config import parse_config
from cpt_control.protocols import FieldCapExceeded, GateResult
from cpt_control.sweeps import (
    DETUNING_COLUMNS,
    FIELD_COLUMNS,
    PROTOCOL_COLUMNS,
    SweepResult,
    emit_results,
    optimize_gate_time,
    run_detuning_map,
    run_field_sweep,
    run_protocol_scan,
)

SCAN = {
    "species": "SnV",
    "protocols": ["orthogonal", "drag"],
    "angles_pi": [1],
    "gate_time": {"min_ps": 35, "max_ps": 45, "points": 2, "refine": 0},
    "drag": {"rescale": {"min": -1, "max": 1, "points": 3}},
}
FIELD = {
    "species": "SnV",
    "field": {"b_par_T": {"min": 0.2, "max": 0.5, "points": 2},
              "b_perp_T": {"min": 0.3, "max": 0.6, "points": 2}, "plane": "auto"},
}
DETUNING = {
    "species": "SnV",
    "detuning": {"min_GHz": -5, "max_GHz": 5, "points": 3, "gate_times_ps": [40]},
}


def _fake(fidelities):
    def evaluate(t):
        f = fidelities(t)
        if f is None:
            raise FieldCapExceeded("over")
        return GateResult(f, 0.0, t, 1.0)
    return evaluate


def test_early_stop_skips_long_times():
    calls = []

    def fid(t):
        calls.append(t)
        return 1.0 - abs(np.log(t / 3.0))

    scan = optimize_gate_time(_fake(fid), np.arange(1.0, 11.0), refine=0, stop_margin=0.02)
    assert scan.best.gate_time == 3.0
    assert max(calls) == 4.0


def test_refinement_brackets_best():
    scan = optimize_gate_time(_fake(lambda t: -(np.log(t) - np.log(2.5)) ** 2),
                              [1.0, 2.0, 4.0, 8.0], refine=8, stop_margin=10.0)
    assert 2.0 < scan.best.gate_time < 4.0
    assert abs(np.log(scan.best.gate_time / 2.5)) < np.log(4.0 / 2.0) / 9


def test_cap_skipped_times_recorded():
    scan = optimize_gate_time(_fake(lambda t: None if t < 3 else 1.0 / t), [1.0, 2.0, 3.0, 4.0],
                              refine=0, stop_margin=10.0)
    assert scan.skipped == (1.0, 2.0)
    assert scan.best.gate_time == 3.0
    empty = optimize_gate_time(_fake(lambda t: None), [1.0, 2.0])
    assert empty.best is None and not empty.points


@pytest.mark.parametrize("kind,columns", [
    ("protocol_scan", PROTOCOL_COLUMNS), ("field_sweep", FIELD_COLUMNS),
    ("detuning_map", DETUNING_COLUMNS),
])
def test_empty_result_writes_header_only(tmp_path, kind, columns):
    paths = emit_results(SweepResult(kind, columns, ()), tmp_path, "both")
    csv_path, json_path = paths
    assert csv_path.read_text() == ",".join(columns) + "\n"
    payload = json.loads(json_path.read_text())
    assert payload["records"] == [] and payload["columns"] == list(columns)


def test_bad_format_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_results(SweepResult("x", ("a",), ()), tmp_path, "xml")


def test_floats_written_with_fixed_precision(tmp_path):
    res = SweepResult("x", ("a", "b"), ({"a": 1 / 3, "b": True},))
    (path,) = emit_results(res, tmp_path, "csv")
    assert path.read_text().splitlines()[1] == "0.333333333333,true"


def _csv_body(result, out_dir):
    (path,) = emit_results(result, out_dir, "csv")
    return path.read_bytes()


@pytest.fixture(scope="module")
def scan_cfg():
    return parse_config(SCAN)


def test_protocol_scan_records(scan_cfg):
    res = run_protocol_scan(scan_cfg)
    assert res.columns == PROTOCOL_COLUMNS
    assert [r["protocol"] for r in res.records] == ["orthogonal", "drag"]
    for r in res.records:
        assert 0 < r["infidelity"] < 0.01
        assert r["optimal_T_s"] in (35e-12, 45e-12)
    assert res.metadata["config_digest"] == scan_cfg.digest()


@pytest.mark.parametrize("runner,data", [
    (run_protocol_scan, SCAN), (run_field_sweep, FIELD), (run_detuning_map, DETUNING),
])
def test_serial_parallel_byte_identical(tmp_path, runner, data):
    cfg = parse_config(data)
    first = _csv_body(runner(cfg), tmp_path / "a")
    again = _csv_body(runner(cfg), tmp_path / "b")
    pooled = _csv_body(runner(replace(cfg, workers=2)), tmp_path / "c")
    assert first == again == pooled


def test_field_sweep_records_plane():
    res = run_field_sweep(parse_config(FIELD))
    assert len(res.records) == 4
    assert all(r["plane"] in ("xy", "xz", "yz") for r in res.records)
    assert [(r["B_perp"], r["B_par"]) for r in res.records] == sorted(
        (r["B_perp"], r["B_par"]) for r in res.records)


def test_zero_field_point_uses_zero_field_lambda():
    data = {**FIELD, "field": {"b_par_T": {"min": 0, "max": 0, "points": 1},
                               "b_perp_T": {"min": 0, "max": 0, "points": 1}}}
    (rec,) = run_field_sweep(parse_config(data)).records
    assert rec["plane"] == "yz"
    assert rec["fidelity"] > 0.99


def test_detuning_map_angle():
    res = run_detuning_map(parse_config(DETUNING))
    lo, mid, hi = res.records
    assert mid["detuning_GHz"] == 0.0
    assert mid["rotation_angle"] == pytest.approx(np.pi)
    # folded into (-pi, pi]: opposite detunings give opposite angles
    assert lo["rotation_angle"] == pytest.approx(-hi["rotation_angle"], rel=1e-12)
    assert 0 < hi["rotation_angle"] < np.pi
