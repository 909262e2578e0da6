"""Laser polarizations that remove cross-talk (and some leakage) by orthogonality.

The coupling of a laser with polarization ``e`` to a transition with dipole
``d`` is the bilinear product ``e . d`` (no complex conjugation), so every
null condition below is linear in ``e``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .defect import DefectModel, EigenSystem, transition_index
from .pulses import rabi_from_field

PLANES = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}
NULL_TOL = 1e-10


class DegeneratePlane(ValueError):
    """The constraint dipole has no component inside the requested plane."""


class SingularJTPhase(ArithmeticError):
    """Closed-form leakage-nulling coefficients are undefined for these JT phases."""


class SingularJTPhaseWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PolarizationSolution:
    """Unit polarizations of the two lasers.

    ``nulled`` lists ``(laser, transition)`` pairs (laser is 1 or 2) whose
    coupling vanishes, as found by checking every bright transition.
    ``coefficients`` holds ``(c1, c2, c3)`` of laser 1 when they came from the
    closed form.
    """

    e1: np.ndarray
    e2: np.ndarray
    plane: str | None
    legs: tuple[str, str]
    nulled: tuple[tuple[int, str], ...] = ()
    coefficients: tuple[complex, complex, complex] | None = None
    scheme: str = "orthogonal"
    extra: dict = field(default_factory=dict)

    @property
    def vectors(self) -> tuple[np.ndarray, np.ndarray]:
        return self.e1, self.e2

    def nulled_for(self, laser: int) -> list[str]:
        return [t for l, t in self.nulled if l == laser]


def normalize_phase(vec, tol: float = 1e-12) -> np.ndarray:
    """Unit-normalize and make the first nonzero component real positive."""
    v = np.asarray(vec, dtype=complex)
    norm = np.linalg.norm(v)
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero polarization vector")
    v = v / norm
    for comp in v:
        if abs(comp) > tol:
            return v * np.exp(-1j * np.angle(comp))
    return v


def in_plane_null(dipole, plane: str = "xz") -> np.ndarray:
    """Unit vector in ``plane`` with ``e . dipole = 0``."""
    try:
        a, b = PLANES[plane]
    except KeyError:
        raise ValueError(f"unknown plane {plane!r}") from None
    d = np.asarray(dipole, dtype=complex)
    scale = np.linalg.norm(d)
    if scale == 0.0 or max(abs(d[a]), abs(d[b])) <= 1e-12 * scale:
        raise DegeneratePlane(f"dipole has no component in the {plane} plane")
    e = np.zeros(3, dtype=complex)
    e[a], e[b] = d[b], -d[a]
    return normalize_phase(e)


def ratio_polarization(dipole, plane: str = "xz") -> np.ndarray:
    """Unnormalized ratio form ``u_a - (d_a/d_b) u_b`` of the same null vector."""
    a, b = PLANES[plane]
    d = np.asarray(dipole, dtype=complex)
    e = np.zeros(3, dtype=complex)
    e[a] = 1.0
    e[b] = -d[a] / d[b]
    return e


def _find_nulls(es: EigenSystem, e1, e2, tol: float = NULL_TOL) -> tuple:
    out = []
    for label in es.bright_transitions():
        d = es.dipole(label)
        ref = np.linalg.norm(d)
        for laser, e in ((1, e1), (2, e2)):
            if abs(np.dot(e, d)) <= tol * ref:
                out.append((laser, label))
    return tuple(sorted(out))


def solve_crosstalk_free(
    es: EigenSystem, legs: tuple[str, str], plane: str = "xz"
) -> PolarizationSolution:
    """Each laser is the in-plane null vector of the other laser's leg dipole."""
    d1, d2 = es.dipole(legs[0]), es.dipole(legs[1])
    if np.linalg.norm(d1) == 0 or np.linalg.norm(d2) == 0:
        raise ValueError(f"Lambda legs {legs} must both be bright")
    e1 = in_plane_null(d2, plane)
    e2 = in_plane_null(d1, plane)
    return PolarizationSolution(e1, e2, plane, tuple(legs), _find_nulls(es, e1, e2))


def leakage_null_coefficients(model: DefectModel, c1: complex = 1.0) -> tuple:
    """Closed-form ``(c1, c2, c3)`` of laser 1 nulling its second leg and own C leakage.

    Valid at zero field for the spin-down Lambda system built on ``v1`` and
    ``v3`` of the ground manifold.
    """
    if c1 == 0:
        raise ValueError("c1 must be nonzero")
    tg, te = model.theta_g, model.theta_e
    pg, pe = model.phi_g, -model.phi_e
    den = np.sin(te) * np.sin(pe) + np.sin(tg) * np.sin(pg)
    if abs(den) < 1e-12:
        raise SingularJTPhase("sin(theta_e) sin(phi_e) + sin(theta_g) sin(phi_g) vanishes")
    c3 = -1j * c1 * (np.cos(te) + np.cos(tg)) / (model.z_enhancement * den)
    c2 = c1 * (-np.cos(pe) * np.sin(te) + np.cos(pg) * np.sin(tg)) / den
    return complex(c1), complex(c2), complex(c3)


def _cross_null(a, b) -> np.ndarray:
    """Vector ``e`` with ``e . a = e . b = 0`` (bilinear, so the plain cross product)."""
    v = np.cross(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
    scale = np.linalg.norm(a) * np.linalg.norm(b)
    if np.linalg.norm(v) <= 1e-12 * scale:
        raise DegeneratePlane("constraint dipoles are parallel")
    return normalize_phase(v)


def solve_leakage_nulling(
    es: EigenSystem,
    model: DefectModel,
    legs: tuple[str, str],
    leakage_pair: tuple[str, str],
    fallback_plane: str = "yz",
) -> PolarizationSolution:
    """Null each laser on the opposite leg and on one leakage transition.

    The null vectors come from cross products of the two constraint dipoles.
    The closed-form coefficients are attached when defined; if they are
    singular a ``SingularJTPhaseWarning`` is emitted. If the two constraints
    are parallel the solver falls back to ``solve_crosstalk_free``.
    """
    d_leg1, d_leg2 = es.dipole(legs[0]), es.dipole(legs[1])
    d_c1, d_c2 = es.dipole(leakage_pair[0]), es.dipole(leakage_pair[1])
    coeffs = None
    try:
        coeffs = leakage_null_coefficients(model)
    except SingularJTPhase as exc:
        warnings.warn(str(exc), SingularJTPhaseWarning, stacklevel=2)
    try:
        e1 = _cross_null(d_leg2, d_c1)
        e2 = _cross_null(d_leg1, d_c2)
    except DegeneratePlane:
        sol = solve_crosstalk_free(es, legs, fallback_plane)
        return PolarizationSolution(
            sol.e1, sol.e2, sol.plane, sol.legs, sol.nulled, coeffs, "leakage-fallback"
        )
    return PolarizationSolution(
        e1, e2, None, tuple(legs), _find_nulls(es, e1, e2), coeffs, "leakage-null"
    )


# Candidate polarizations for the selection-rule ("naive") scheme.
_NAIVE_BASIS = {
    "z": np.array([0, 0, 1], dtype=complex),
    "sigma+": np.array([1, 1j, 0], dtype=complex) / np.sqrt(2),
    "sigma-": np.array([1, -1j, 0], dtype=complex) / np.sqrt(2),
}


def naive_polarizations(es: EigenSystem, legs: tuple[str, str]) -> PolarizationSolution:
    """Pick for each leg the linear-z or circular polarization it couples to best."""
    chosen = []
    names = []
    for label in legs:
        d = es.dipole(label)
        name, vec = max(_NAIVE_BASIS.items(), key=lambda kv: abs(np.dot(kv[1], d)))
        chosen.append(normalize_phase(vec))
        names.append(name)
    e1, e2 = chosen
    return PolarizationSolution(
        e1, e2, None, tuple(legs), _find_nulls(es, e1, e2), None, "naive",
        {"basis": tuple(names)},
    )


def coupling_table(
    solution: PolarizationSolution,
    es: EigenSystem,
    model: DefectModel,
    field_amplitudes,
    phases=(0.0, 0.0),
) -> np.ndarray:
    """Rabi frequencies ``table[laser, e, g]`` in rad/s for both lasers.

    ``field_amplitudes`` are ``E0`` in V/m; ``phases`` are carrier phases.
    Entries for nulled transitions are set to exactly zero.
    """
    table = np.zeros((2, 4, 4), dtype=complex)
    for l, (vec, amp, ph) in enumerate(zip(solution.vectors, field_amplitudes, phases)):
        overlap = np.einsum("k,egk->eg", vec, es.dipoles)
        table[l] = rabi_from_field(amp, overlap, model.dipole_scale, model.r0) * np.exp(1j * ph)
    for laser, label in solution.nulled:
        e, g = transition_index(label)
        table[laser - 1, e, g] = 0.0
    return table
