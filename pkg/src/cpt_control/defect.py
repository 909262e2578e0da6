"""Eight-level electronic model of group-IV vacancy centers (SiV-, SnV-).

Each manifold (ground, excited) is a 4x4 block in the product basis
``{|e+>, |e->} x {|up>, |down>}`` ordered as ``(e+ up, e+ down, e- up, e- down)``.
Internally every energy is an angular frequency in rad/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from scipy import constants as const

TWO_PI = 2.0 * np.pi
GHZ = 1e9

# electron spin (g = 2) and orbital gyromagnetic ratios, rad s^-1 T^-1
GAMMA_SPIN = TWO_PI * 28.0 * GHZ
GAMMA_ORBIT = TWO_PI * 14.0 * GHZ

GROUND_LABELS = ("1", "2", "3", "4")
EXCITED_LABELS = ("A", "B", "C", "D")

TILT_DEFAULT = np.deg2rad(54.7)
MAX_B_PAR = 9.0
MAX_B_PERP = 3.0

# Pauli matrices and the orbital dipole operators in the helicity basis.
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)

# Cartesian orbitals (e_x, e_y) -> helicity orbitals (e+, e-).
_HELICITY = np.array([[-1.0, 1.0], [1j, 1j]], dtype=complex) / np.sqrt(2.0)


class ModelError(ValueError):
    """Raised for physically invalid model or field parameters."""


@dataclass(frozen=True)
class DefectModel:
    """Physical parameters of one defect species.

    Splittings are angular frequencies (rad/s), times in seconds, lengths in
    metres. ``ground_order``/``excited_order`` pick how the zero-field
    eigenvectors ``v1..v4`` map onto the labels ``1..4`` and ``A..D``; inside
    a Kramers doublet this choice is a labelling convention only.
    """

    species: str
    delta_gs: float
    delta_es: float
    theta_g: float
    theta_e: float
    phi_g: float = 0.0
    phi_e: float = 0.0
    tau: float = 4.5e-9
    t1_spin: float = 1e-3
    t1_orbit: float = 38e-9
    t2_star: float = 35e-9
    temperature: float = 4.0
    dipole_scale: float = 1.0
    r0: float = 0.53e-10
    z_enhancement: float = 2.0
    wavelength: float = 737e-9
    orbital_quenching_g: float = 0.1
    orbital_quenching_e: float = 0.1
    t1_spin_field: float | None = None
    ground_order: tuple[int, int, int, int] = (0, 1, 3, 2)
    excited_order: tuple[int, int, int, int] = (0, 1, 2, 3)

    def __post_init__(self) -> None:
        if self.delta_gs <= 0 or self.delta_es <= 0:
            raise ModelError("manifold splittings must be positive")
        times = [self.tau, self.t1_spin, self.t1_orbit, self.t2_star]
        if self.t1_spin_field is not None:
            times.append(self.t1_spin_field)
        if min(times) <= 0:
            raise ModelError("relaxation times must be positive")
        if self.temperature <= 0:
            raise ModelError("temperature must be positive")
        for order in (self.ground_order, self.excited_order):
            if sorted(order) != [0, 1, 2, 3]:
                raise ModelError(f"invalid label order {order}")
            # the lower doublet (v1, v2) must come first
            if sorted(order[:2]) != [0, 1]:
                raise ModelError(f"label order {order} breaks energy ordering")

    @property
    def lambda_so_g(self) -> float:
        return self.delta_gs * np.cos(self.theta_g)

    @property
    def lambda_so_e(self) -> float:
        return self.delta_es * np.cos(self.theta_e)

    @property
    def dipole_moment(self) -> float:
        """Dipole scale ``alpha * e * r0`` in C m."""
        return self.dipole_scale * const.e * self.r0

    def with_overrides(self, **kwargs) -> "DefectModel":
        return replace(self, **kwargs)

    def spin_t1(self, field_on: bool) -> float:
        if field_on and self.t1_spin_field is not None:
            return self.t1_spin_field
        return self.t1_spin


def siv_model(**overrides) -> DefectModel:
    """SiV- defaults at 4 K."""
    base = DefectModel(
        species="SiV",
        delta_gs=TWO_PI * 50 * GHZ,
        delta_es=TWO_PI * 260 * GHZ,
        theta_g=0.3,
        theta_e=0.1,
        tau=4.5e-9,
        t1_spin=2.4e-3,
        t1_orbit=38e-9,
        t2_star=35e-9,
        temperature=4.0,
        dipole_scale=6.663,
        wavelength=736e-9,
        t1_spin_field=300e-9,
        ground_order=(0, 1, 3, 2),
    )
    return replace(base, **overrides)


def snv_model(**overrides) -> DefectModel:
    """SnV- defaults at 6 K."""
    base = DefectModel(
        species="SnV",
        delta_gs=TWO_PI * 825 * GHZ,
        delta_es=TWO_PI * 2950 * GHZ,
        theta_g=0.25,
        theta_e=0.15,
        tau=4.5e-9,
        t1_spin=1.26e-3,
        t1_orbit=38e-9,
        t2_star=59e-9,
        temperature=6.0,
        dipole_scale=3.3,
        wavelength=620e-9,
        t1_spin_field=150e-9,
        ground_order=(1, 0, 3, 2),
    )
    return replace(base, **overrides)


MODEL_FACTORIES = {"SiV": siv_model, "SnV": snv_model}


def model_for(species: str, **overrides) -> DefectModel:
    try:
        factory = MODEL_FACTORIES[species]
    except KeyError:
        raise ModelError(f"unknown species {species!r}") from None
    return factory(**overrides)


@dataclass(frozen=True)
class MagneticField:
    """Lab-frame field: ``b_par`` along the cryostat axis, ``b_perp`` across it (T)."""

    b_par: float = 0.0
    b_perp: float = 0.0
    tilt: float = TILT_DEFAULT

    def __post_init__(self) -> None:
        if abs(self.b_par) > MAX_B_PAR:
            raise ModelError(f"|B_par| = {abs(self.b_par)} T exceeds {MAX_B_PAR} T")
        if abs(self.b_perp) > MAX_B_PERP:
            raise ModelError(f"|B_perp| = {abs(self.b_perp)} T exceeds {MAX_B_PERP} T")

    @property
    def is_zero(self) -> bool:
        return self.b_par == 0.0 and self.b_perp == 0.0


def lab_to_defect_field(field: MagneticField) -> np.ndarray:
    """Rotate the lab field into the defect frame; ``B_y`` is identically zero."""
    c, s = np.cos(field.tilt), np.sin(field.tilt)
    bx = field.b_par * c + field.b_perp * s
    bz = field.b_par * s - field.b_perp * c
    return np.array([bx, 0.0, bz])


def jt_orbital_block(delta: float, theta: float, phi: float) -> np.ndarray:
    """Jahn-Teller term ``[[Qx, Qy], [Qy, -Qx]]`` rotated into the helicity basis."""
    q = 0.5 * delta * np.sin(theta)
    cart = q * np.array([[np.cos(phi), np.sin(phi)], [np.sin(phi), -np.cos(phi)]])
    return _HELICITY.conj().T @ cart @ _HELICITY


def manifold_hamiltonian(
    delta: float,
    theta: float,
    phi: float,
    b_defect: np.ndarray | None = None,
    quenching: float = 0.1,
) -> np.ndarray:
    """4x4 spin-orbit + Jahn-Teller + Zeeman block of one manifold."""
    lam = delta * np.cos(theta)
    h = np.kron(jt_orbital_block(delta, theta, phi), _I2)
    h = h - 0.5 * lam * np.kron(_SZ, _SZ)
    if b_defect is not None:
        bx, by, bz = np.asarray(b_defect, dtype=float)
        spin = 0.5 * GAMMA_SPIN * (bx * _SX + by * _SY + bz * _SZ)
        h = h + np.kron(_I2, spin) + quenching * GAMMA_ORBIT * bz * np.kron(_SZ, _I2)
    return h


def build_hamiltonian(model: DefectModel, b_defect=None) -> np.ndarray:
    """Block-diagonal 8x8 Hamiltonian (ground block first)."""
    hg = manifold_hamiltonian(
        model.delta_gs, model.theta_g, model.phi_g, b_defect, model.orbital_quenching_g
    )
    he = manifold_hamiltonian(
        model.delta_es, model.theta_e, model.phi_e, b_defect, model.orbital_quenching_e
    )
    h = np.zeros((8, 8), dtype=complex)
    h[:4, :4] = hg
    h[4:, 4:] = he
    return h


def _half_angles(theta: float) -> tuple[float, float]:
    return np.sin(0.5 * theta), np.cos(0.5 * theta)


def jt_eigenvectors(theta: float, phi: float) -> np.ndarray:
    """Normalized zero-field eigenvectors ``v1..v4`` as columns.

    ``v1``/``v2`` belong to ``-dE/2``, ``v3``/``v4`` to ``+dE/2``. Written with
    half-angle sines and cosines so that ``theta = 0`` and ``theta = pi``
    reduce smoothly to product states. Global phases follow the unnormalized
    closed forms (last nonzero entry real positive).
    """
    s, c = _half_angles(theta)
    ph = np.exp(1j * phi)
    v = np.zeros((4, 4), dtype=complex)
    v[:, 0] = [0, ph * s, 0, c]
    v[:, 1] = [ph * c, 0, s, 0]
    v[:, 2] = [0, -ph * c, 0, s]
    v[:, 3] = [-ph * s, 0, c, 0]
    return v


def orbital_dipole_operators(z_enhancement: float = 2.0) -> np.ndarray:
    """``p_x, p_y, p_z`` on the orbital helicity space, shape (3, 2, 2).

    ``p_z`` keeps helicity; ``p_x + i p_y = -2|e+><e-|`` raises it.
    """
    return np.array([-_SX, -_SY, z_enhancement * _I2])


def dipole_operators(z_enhancement: float = 2.0) -> np.ndarray:
    """Ground -> excited dipole blocks on the 4-dim manifolds, shape (3, 4, 4)."""
    return np.array([np.kron(p, _I2) for p in orbital_dipole_operators(z_enhancement)])


def _fix_gauge(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        mags = np.abs(col)
        j = int(np.argmax(mags > mags.max() * (1 - 1e-9)))
        out[:, k] = col * np.exp(-1j * np.angle(col[j]))
    return out


def _zero_field_block(delta: float, theta: float, phi: float, order) -> tuple:
    """Diagonalize one B = 0 manifold inside its conserved spin sectors."""
    h = manifold_hamiltonian(delta, theta, phi)
    # sector index: spin down -> (1, 3), spin up -> (0, 2)
    vecs = np.zeros((4, 4), dtype=complex)
    vals = np.zeros(4)
    slots = {(1, 0): 0, (0, 0): 1, (1, 1): 2, (0, 1): 3}
    for spin, idx in ((0, [0, 2]), (1, [1, 3])):
        sub = h[np.ix_(idx, idx)]
        w, u = np.linalg.eigh(sub)
        for branch in range(2):
            full = np.zeros(4, dtype=complex)
            full[idx] = u[:, branch]
            k = slots[(spin, branch)]
            # phase: last nonzero entry real positive, as in the closed forms
            ref = full[idx[1]] if abs(full[idx[1]]) > 1e-12 else full[idx[0]]
            vecs[:, k] = full * np.exp(-1j * np.angle(ref))
            vals[k] = w[branch]
    order = list(order)
    return vals[order], vecs[:, order]


@dataclass(frozen=True)
class EigenSystem:
    """Eigenenergies, eigenvectors and the transition-dipole table.

    ``energies[:4]`` are states 1-4, ``energies[4:]`` are A-D (excluding the
    optical zero-phonon offset). ``states`` holds 8-dim column vectors.
    ``dipoles[e, g]`` is ``<e|p|g>`` as a complex 3-vector.
    """

    energies: np.ndarray
    states: np.ndarray
    dipoles: np.ndarray
    b_defect: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def ground_energies(self) -> np.ndarray:
        return self.energies[:4]

    @property
    def excited_energies(self) -> np.ndarray:
        return self.energies[4:]

    def dipole(self, label: str) -> np.ndarray:
        e, g = transition_index(label)
        return self.dipoles[e, g]

    def transition_frequency(self, label: str) -> float:
        e, g = transition_index(label)
        return self.energies[4 + e] - self.energies[g]

    def bright_transitions(self, rel_threshold: float = 1e-6) -> list[str]:
        mags = np.linalg.norm(self.dipoles, axis=2)
        cut = rel_threshold * mags.max()
        return [
            EXCITED_LABELS[e] + GROUND_LABELS[g]
            for e in range(4)
            for g in range(4)
            if mags[e, g] > cut
        ]


def transition_index(label: str) -> tuple[int, int]:
    """``"C4"`` -> ``(2, 3)`` as (excited index, ground index)."""
    if len(label) != 2 or label[0] not in EXCITED_LABELS or label[1] not in GROUND_LABELS:
        raise KeyError(f"bad transition label {label!r}")
    return EXCITED_LABELS.index(label[0]), GROUND_LABELS.index(label[1])


def level_index(label: str) -> int:
    """Index of a level in the 8-dim ordering (1-4 then A-D)."""
    if label in GROUND_LABELS:
        return GROUND_LABELS.index(label)
    if label in EXCITED_LABELS:
        return 4 + EXCITED_LABELS.index(label)
    raise KeyError(f"bad level label {label!r}")


def transition_dipoles(states: np.ndarray, model: DefectModel) -> np.ndarray:
    """Dipole table ``<e|p_k|g>`` for all 16 pairs, shape (4, 4, 3)."""
    ops = dipole_operators(model.z_enhancement)
    g = states[:4, :4]
    e = states[4:, 4:]
    return np.einsum("ia,kij,jb->abk", e.conj(), ops, g)


def eigensystem(model: DefectModel, b_defect=None) -> EigenSystem:
    """Diagonalize both manifolds and build the dipole table.

    At zero field each manifold is split into its spin sectors so that the
    Kramers partners are uniquely defined; otherwise the states are sorted by
    energy within each manifold.
    """
    b = np.zeros(3) if b_defect is None else np.asarray(b_defect, dtype=float)
    states = np.zeros((8, 8), dtype=complex)
    energies = np.zeros(8)
    if not np.any(b):
        eg, vg = _zero_field_block(model.delta_gs, model.theta_g, model.phi_g, model.ground_order)
        ee, ve = _zero_field_block(model.delta_es, model.theta_e, model.phi_e, model.excited_order)
    else:
        h = build_hamiltonian(model, b)
        eg, vg = np.linalg.eigh(h[:4, :4])
        ee, ve = np.linalg.eigh(h[4:, 4:])
        vg, ve = _fix_gauge(vg), _fix_gauge(ve)
    energies[:4], energies[4:] = eg, ee
    states[:4, :4], states[4:, 4:] = vg, ve
    return EigenSystem(energies, states, transition_dipoles(states, model), b)


def eigensystem_for_field(model: DefectModel, field: MagneticField) -> EigenSystem:
    return eigensystem(model, lab_to_defect_field(field))


def _dipole_pair(a: np.ndarray, b: np.ndarray, z_enh: float) -> np.ndarray:
    ac = a.conj()
    return np.array(
        [
            -(ac[0] * b[1] + ac[1] * b[0]),
            1j * (ac[0] * b[1] - ac[1] * b[0]),
            z_enh * (ac[0] * b[0] + ac[1] * b[1]),
        ]
    )


def analytic_dipoles(model: DefectModel) -> Mapping[str, np.ndarray]:
    """Closed-form zero-field dipoles between the spin-down JT states.

    ``d1 = <v1e|p|v1g>`` (A-type leg), ``d2 = <v3e|p|v1g>`` (C-type leakage of
    the same ground state), ``d3 = <v1e|p|v3g>`` (second leg). Eigenvectors
    are normalized, so the expressions stay finite for every angle.
    """
    sg, cg = _half_angles(model.theta_g)
    se, ce = _half_angles(model.theta_e)
    ug, ue = np.exp(1j * model.phi_g), np.exp(-1j * model.phi_e)
    z = model.z_enhancement
    d1 = np.array(
        [
            -(ue * se * cg + ug * ce * sg),
            1j * (ue * se * cg - ug * ce * sg),
            z * (ue * ug * se * sg + ce * cg),
        ]
    )
    d2 = np.array(
        [
            ue * ce * cg - ug * se * sg,
            -1j * (ue * ce * cg + ug * se * sg),
            z * (se * cg - ue * ug * ce * sg),
        ]
    )
    d3 = np.array(
        [
            ug * ce * cg - ue * se * sg,
            1j * (ue * se * sg + ug * ce * cg),
            z * (ce * sg - ue * ug * se * cg),
        ]
    )
    return {"d1": d1, "d2": d2, "d3": d3}


def spin_down_orbitals(theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """Orbital parts of ``v1`` and ``v3`` (both live in the spin-down sector)."""
    s, c = _half_angles(theta)
    ph = np.exp(1j * phi)
    return np.array([ph * s, c]), np.array([-ph * c, s])
