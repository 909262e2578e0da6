import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpt_control.defect import analytic_dipoles, eigensystem, model_for, transition_index
from cpt_control.polarization import (
    DegeneratePlane,
    SingularJTPhase,
    in_plane_null,
    leakage_null_coefficients,
    naive_polarizations,
    normalize_phase,
    solve_crosstalk_free,
    solve_leakage_nulling,
)
from cpt_control.protocols import build_gate, default_lambda
from cpt_control.pulses import design_cpt_gate, rabi_from_field

angles = st.floats(0.05, np.pi - 0.05)
phases = st.floats(-np.pi, np.pi)
cvec = st.tuples(*[st.floats(-2, 2)] * 6).map(
    lambda v: np.array(v[:3]) + 1j * np.array(v[3:])
)


def _parallel(a, b, tol=1e-12):
    return abs(abs(np.vdot(a, b)) - np.linalg.norm(a) * np.linalg.norm(b)) < tol


def _qubit_entries(problem):
    """Nonzero (laser, transition) couplings out of the qubit levels."""
    out = {}
    for l in range(2):
        for e in range(4):
            for g in problem.qubit_levels:
                label = "ABCD"[e] + "1234"[g]
                if abs(problem.couplings[l, e, g]) > 0:
                    out[(l + 1, label)] = problem.couplings[l, e, g]
    return out


def _gate(species, protocol="orthogonal"):
    spec = design_cpt_gate(np.pi, gate_time=1e-9)
    return build_gate(model_for(species), spec, protocol=protocol, enforce_cap=False)


def test_siv_xz_matches_ratio_form():
    es = eigensystem(model_for("SiV"))
    sol = solve_crosstalk_free(es, ("A1", "A4"), "xz")
    d = es.dipole("A4")
    ratio = normalize_phase(np.array([1.0, 0.0, -d[0] / d[2]]))
    assert _parallel(sol.e1, ratio)
    assert abs(np.dot(sol.e1, d)) < 1e-12 * np.linalg.norm(d)


def test_snv_yz_matches_ratio_form():
    es = eigensystem(model_for("SnV"))
    sol = solve_crosstalk_free(es, ("A2", "A4"), "yz")
    d = es.dipole("A4")
    assert _parallel(sol.e1, normalize_phase(np.array([0.0, 1.0, -d[1] / d[2]])))


@given(cvec, st.sampled_from(["xy", "xz", "yz"]))
def test_null_vector_constraint(d, plane):
    a, b = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}[plane]
    if np.hypot(abs(d[a]), abs(d[b])) < 1e-3:
        return
    e = in_plane_null(d, plane)
    assert abs(np.dot(e, d)) < 1e-12 * np.linalg.norm(d)
    assert np.linalg.norm(e) == pytest.approx(1.0, abs=1e-14)


@given(cvec, st.floats(0.1, 10), phases)
def test_null_vector_scale_invariant(d, scale, phase):
    if np.hypot(abs(d[0]), abs(d[2])) < 1e-3:
        return
    e1 = in_plane_null(d, "xz")
    e2 = in_plane_null(scale * np.exp(1j * phase) * d, "xz")
    assert _parallel(e1, e2, 1e-10)


def test_out_of_plane_dipole_rejected():
    with pytest.raises(DegeneratePlane):
        in_plane_null(np.array([0, 1.0, 0]), "xz")


def test_zero_vector_rejected():
    with pytest.raises(ValueError):
        normalize_phase(np.zeros(3))


def test_first_component_real_positive():
    v = normalize_phase(np.array([0, -1j, 1.0]))
    assert v[1].real > 0 and abs(v[1].imag) < 1e-15


@settings(max_examples=40)
@given(angles, angles, phases, phases)
def test_closed_form_leakage_null(tg, te, pg, pe):
    m = model_for("SiV", theta_g=tg, theta_e=te, phi_g=pg, phi_e=pe)
    try:
        c = np.array(leakage_null_coefficients(m))
    except SingularJTPhase:
        return
    if np.linalg.norm(c) > 1e6:
        return
    es = eigensystem(m)
    for label in ("A4", "C1"):
        d = es.dipole(label)
        assert abs(np.dot(c, d)) < 1e-10 * np.linalg.norm(c) * np.linalg.norm(d)


def test_closed_form_uses_analytic_dipoles_too():
    m = model_for("SiV", phi_g=0.4, phi_e=-0.7)
    c = np.array(leakage_null_coefficients(m))
    ref = analytic_dipoles(m)
    # analytic d3, d2 carry the conjugate phase convention of the closed form
    for key in ("d2", "d3"):
        d = ref[key]
        assert abs(np.dot(c, d)) < 1e-10 * np.linalg.norm(c) * np.linalg.norm(d)


def test_closed_form_needs_nonzero_scale():
    with pytest.raises(ValueError):
        leakage_null_coefficients(model_for("SiV", phi_g=0.3), c1=0.0)


def test_singular_phase_falls_back_with_warning():
    m = model_for("SiV")  # phi_g = phi_e = 0
    es = eigensystem(m)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sol = solve_leakage_nulling(es, m, ("A1", "A4"), ("C1", "C4"))
    assert sol.coefficients is None
    assert any("vanishes" in str(w.message) for w in caught)
    assert (2, "A1") in sol.nulled and (1, "A4") in sol.nulled


def test_naive_siv_has_crosstalk():
    entries = _qubit_entries(_gate("SiV", "naive"))
    assert (2, "A1") in entries and (1, "A4") in entries
    off_lambda = set(entries) - {(1, "A1"), (2, "A4")}
    assert len(off_lambda) >= 4


def test_orthogonal_siv_four_leakage_no_crosstalk():
    p = _gate("SiV")
    entries = _qubit_entries(p)
    assert (2, "A1") not in entries and (1, "A4") not in entries
    assert set(entries) == {(1, "A1"), (2, "A4"), (1, "C1"), (1, "C4"), (2, "C1"), (2, "C4")}


def test_orthogonal_snv_two_leakage_entries():
    entries = _qubit_entries(_gate("SnV"))
    assert set(entries) == {(1, "A2"), (2, "A4"), (2, "C2"), (1, "C4")}


@pytest.mark.parametrize("species", ["SiV", "SnV"])
def test_crosstalk_nulls_relative_to_rabi(species):
    p = _gate(species)
    es, pol = p.es, p.polarization
    leg1, leg2 = p.choice.legs
    omega = p.spec.omega_eff
    for l, label in ((1, leg1), (0, leg2)):
        amp = p.lasers[l].amplitude
        raw = p.couplings[l][transition_index(label)]
        dot = np.dot(pol.vectors[l], es.dipole(label))
        # raw overlap, before any zeroing by the coupling table
        rabi = abs(rabi_from_field(amp, dot, p.model.dipole_scale, p.model.r0))
        assert rabi < 1e-10 * omega
        assert abs(raw) < 1e-10 * omega


def test_snv_yz_nulls_leakage():
    p = _gate("SnV")
    es = p.es
    e1, e2 = p.polarization.vectors
    for vec, label in ((e1, "C2"), (e2, "C4")):
        d = es.dipole(label)
        assert abs(np.dot(vec, d)) < 1e-12 * np.linalg.norm(d)


def test_default_choices():
    assert default_lambda("SiV", False).legs == ("A1", "A4")
    assert default_lambda("SnV", False).plane == "yz"
    with pytest.raises(ValueError):
        default_lambda("GeV", False)
