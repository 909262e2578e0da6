import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cpt_control.defect import (
    ModelError,
    MagneticField,
    analytic_dipoles,
    build_hamiltonian,
    eigensystem,
    eigensystem_for_field,
    jt_eigenvectors,
    lab_to_defect_field,
    manifold_hamiltonian,
    model_for,
    transition_index,
)

angles = st.floats(0.01, np.pi - 0.01)
phases = st.floats(-np.pi, np.pi)
fields = st.floats(-2.0, 2.0)


def test_zero_field_maps_to_zero():
    assert np.array_equal(lab_to_defect_field(MagneticField()), np.zeros(3))


def test_field_rotation_matches_direct_trig():
    tilt = np.deg2rad(54.7)
    par = lab_to_defect_field(MagneticField(b_par=1.0))
    perp = lab_to_defect_field(MagneticField(b_perp=1.0))
    # independent evaluation of the rotated unit vectors
    assert par == pytest.approx([np.cos(tilt), 0.0, np.sin(tilt)], abs=1e-15)
    assert par[0] == pytest.approx(0.5779, abs=1e-4)
    assert par[2] == pytest.approx(0.8161, abs=1e-4)
    assert perp == pytest.approx([np.sin(tilt), 0.0, -np.cos(tilt)], abs=1e-15)


def test_field_limits_rejected():
    with pytest.raises(ModelError):
        MagneticField(b_par=10.0)
    with pytest.raises(ModelError):
        MagneticField(b_perp=-3.5)


def test_unknown_species_rejected():
    with pytest.raises(ModelError):
        model_for("NV")


def test_bad_splitting_rejected():
    with pytest.raises(ModelError):
        model_for("SiV", delta_gs=-1.0)


def test_snv_ground_gap_equals_splitting():
    m = model_for("SnV")
    e = eigensystem(m).ground_energies
    assert (e[2] - e[0]) / m.delta_gs == pytest.approx(1.0, rel=1e-9)
    assert (e[3] - e[1]) / m.delta_gs == pytest.approx(1.0, rel=1e-9)


def test_pure_spin_orbit_gives_product_states():
    m = model_for("SiV", theta_g=0.0, theta_e=0.0)
    es = eigensystem(m)
    for k in range(8):
        col = es.states[:, k]
        assert np.sort(np.abs(col))[-1] == pytest.approx(1.0, abs=1e-15)
        assert np.sort(np.abs(col))[-2] == pytest.approx(0.0, abs=1e-15)


def test_block_eigenvalues_at_zero_field():
    m = model_for("SiV")
    es = eigensystem(m)
    for block, delta in ((es.ground_energies, m.delta_gs), (es.excited_energies, m.delta_es)):
        # 2x2 SO+JT block: eigenvalues +-sqrt((lam/2)^2 + (delta sin/2)^2) = +-delta/2
        assert np.sort(block) == pytest.approx([-delta / 2] * 2 + [delta / 2] * 2, rel=1e-12)


def test_v1_at_maximal_jt_mixing():
    v = jt_eigenvectors(np.pi / 2, 0.0)
    assert v[:, 0] == pytest.approx(np.array([0, 1, 0, 1]) / np.sqrt(2), abs=1e-15)


@given(angles, phases)
def test_jt_eigenvectors_orthonormal(theta, phi):
    v = jt_eigenvectors(theta, phi)
    assert np.allclose(v.conj().T @ v, np.eye(4), atol=1e-14)


@given(angles, phases)
def test_jt_eigenvectors_diagonalize_block(theta, phi):
    delta = 1.0
    h = manifold_hamiltonian(delta, theta, phi)
    v = jt_eigenvectors(theta, phi)
    d = v.conj().T @ h @ v
    assert np.allclose(d, np.diag([-0.5, -0.5, 0.5, 0.5]), atol=1e-14)


def test_siv_bright_set():
    es = eigensystem(model_for("SiV"))
    expected = {"A1", "C1", "B2", "D2", "B3", "D3", "A4", "C4"}
    assert set(es.bright_transitions()) == expected
    mags = np.linalg.norm(es.dipoles, axis=2)
    for e, g in np.ndindex(4, 4):
        if "ABCD"[e] + "1234"[g] not in expected:
            assert mags[e, g] < 1e-12


def test_snv_bright_set():
    es = eigensystem(model_for("SnV"))
    assert set(es.bright_transitions()) == {"A2", "C2", "B1", "D1", "B3", "D3", "A4", "C4"}


def test_no_jt_selection_rules_are_pure():
    es = eigensystem(model_for("SiV", theta_g=0.0, theta_e=0.0))
    for label in es.bright_transitions():
        d = es.dipole(label)
        z_only = abs(d[0]) < 1e-14 and abs(d[1]) < 1e-14
        circular = abs(d[2]) < 1e-14 and abs(abs(d[0]) - abs(d[1])) < 1e-14
        assert z_only or circular


@settings(max_examples=40)
@given(angles, angles, phases, phases)
def test_numeric_dipoles_match_closed_form(tg, te, pg, pe):
    m = model_for("SiV", theta_g=tg, theta_e=te, phi_g=pg, phi_e=pe)
    es = eigensystem(m)
    ref = analytic_dipoles(m)
    # SiV labels: ground v1 -> 1, v3 -> 4; excited v1 -> A, v3 -> C
    pairs = {"d1": es.dipole("A1"), "d2": es.dipole("C1"), "d3": es.dipole("A4")}
    for key, num in pairs.items():
        a = ref[key]
        # equal up to a global phase
        overlap = np.vdot(a, num)
        assert abs(abs(overlap) - np.linalg.norm(a) * np.linalg.norm(num)) < 1e-10
        assert np.linalg.norm(num) == pytest.approx(np.linalg.norm(a), rel=1e-10)


@given(angles, angles, phases, phases)
def test_closed_form_dipoles_finite_nonzero(tg, te, pg, pe):
    m = model_for("SiV", theta_g=tg, theta_e=te, phi_g=pg, phi_e=pe)
    for d in analytic_dipoles(m).values():
        n = np.linalg.norm(d)
        assert np.isfinite(n) and n > 0


@given(fields, fields, fields)
def test_hamiltonian_hermitian(bx, by, bz):
    m = model_for("SnV")
    h = build_hamiltonian(m, np.array([bx, by, bz]))
    assert np.abs(h - h.conj().T).max() < 1e-14 * m.delta_es


def test_zero_field_kramers_degeneracy():
    for species in ("SiV", "SnV"):
        m = model_for(species)
        e = eigensystem(m).energies
        for a, b in ((0, 1), (2, 3), (4, 5), (6, 7)):
            assert abs(e[a] - e[b]) < 1e-9 * m.delta_gs


@given(st.floats(1e-6, 1e-2), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_zeeman_perturbation_bounded(scale, x, y, z):
    direction = np.array([x, y, z])
    if np.linalg.norm(direction) < 1e-3:
        return
    b = scale * direction / np.linalg.norm(direction)
    m = model_for("SiV")
    e0 = eigensystem(m).energies
    e1 = eigensystem(m, b).energies
    zeeman = build_hamiltonian(m, b) - build_hamiltonian(m)
    bound = np.linalg.norm(zeeman, 2)
    for lo, hi in ((0, 4), (4, 8)):
        assert np.abs(np.sort(e1[lo:hi]) - np.sort(e0[lo:hi])).max() <= bound * (1 + 1e-9)


def test_field_eigensystem_is_energy_sorted():
    es = eigensystem_for_field(model_for("SiV"), MagneticField(b_par=1.0, b_perp=0.5))
    assert np.all(np.diff(es.ground_energies) > 0)
    assert np.all(np.diff(es.excited_energies) > 0)
    u = es.states
    assert np.allclose(u.conj().T @ u, np.eye(8), atol=1e-12)


def test_transition_labels():
    assert transition_index("C4") == (2, 3)
    with pytest.raises(KeyError):
        transition_index("E1")
