"""Sech-pulse CPT gate design.

A Lambda system driven by two lasers with a common two-photon detuning and
the same ``sech`` envelope reduces, in the dark/bright frame, to a two-level
bright <-> excited problem. With bandwidth equal to the effective Rabi
frequency the pulse is transitionless and the bright state picks up a phase
``phi = 2 atan2(sigma, Delta)`` while the dark state is untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants as const
from scipy.integrate import solve_ivp

from .hypergeom import hyp2f1

SIGMA_T0_DEFAULT = 6.0
N_DIAMOND = 2.4
FIELD_CAPS = {"SiV": 8.5e4, "SnV": 1.0e6}


class GateDesignError(ValueError):
    pass


@dataclass(frozen=True)
class GateSpec:
    """Target rotation and the sech parameters that realize it (SI units, rad/s)."""

    phi: float
    theta_axis: float
    alpha_axis: float
    sigma: float
    delta: float
    omega_eff: float
    gate_time: float
    t0: float

    @property
    def sigma_t0(self) -> float:
        return self.sigma * self.t0

    def bright_state(self) -> np.ndarray:
        return db_transform(self.theta_axis, self.alpha_axis)[:, 0]

    def dark_state(self) -> np.ndarray:
        return db_transform(self.theta_axis, self.alpha_axis)[:, 1]

    def leg_rabi(self) -> np.ndarray:
        """Complex leg Rabi frequencies ``(Omega_1, Omega_2)`` giving ``Omega_eff |e><b|``."""
        return self.omega_eff * self.bright_state().conj()

    def envelope(self, t):
        return sech_envelope(t, self.sigma, self.t0)

    def ideal_db(self) -> np.ndarray:
        return ideal_db_gate(self.phi)

    def ideal_qubit(self) -> np.ndarray:
        return ideal_qubit_gate(self.phi, self.theta_axis, self.alpha_axis)


@dataclass(frozen=True)
class LaserField:
    """One driving laser: unit polarization, detuning from its leg, amplitude and envelope."""

    polarization: np.ndarray
    detuning: float
    amplitude: float
    spec: GateSpec
    phase: float = 0.0
    correction: object | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise GateDesignError("laser amplitude must be non-negative")

    def with_correction(self, correction) -> "LaserField":
        return replace(self, correction=correction)


def detuning_for_angle(phi: float, sigma: float) -> float:
    """Two-photon detuning ``sigma / tan(phi/2)``; exactly zero for ``phi = +-pi``."""
    if phi == 0.0:
        raise GateDesignError("phi = 0 needs infinite detuning")
    if not -2 * np.pi < phi < 2 * np.pi:
        raise GateDesignError("phi must lie in (-2 pi, 2 pi)")
    if np.isclose(abs(phi), np.pi, rtol=0.0, atol=1e-14):
        return 0.0
    return sigma / np.tan(0.5 * phi)


def rotation_angle(sigma: float, delta: float) -> float:
    """Realized rotation ``2 atan2(sigma, Delta)``, folded into (-pi, pi]."""
    phi = 2.0 * np.arctan2(sigma, delta)
    return phi - 2 * np.pi if phi > np.pi else phi


def sigma_for_gate_time(gate_time: float, sigma_t0: float = SIGMA_T0_DEFAULT) -> float:
    return 2.0 * sigma_t0 / gate_time


def design_cpt_gate(
    phi: float,
    omega_eff: float | None = None,
    *,
    gate_time: float | None = None,
    theta_axis: float = np.pi / 2,
    alpha_axis: float = 0.0,
    sigma_t0: float = SIGMA_T0_DEFAULT,
) -> GateSpec:
    """Sech parameters for a rotation by ``phi`` about the axis set by ``theta_axis, alpha_axis``.

    Give either ``omega_eff`` (rad/s) or ``gate_time`` (s); the pulse window is
    ``[0, 2 t0]`` with ``sigma t0 = sigma_t0``.
    """
    if (omega_eff is None) == (gate_time is None):
        raise GateDesignError("give exactly one of omega_eff or gate_time")
    sigma = omega_eff if omega_eff is not None else sigma_for_gate_time(gate_time, sigma_t0)
    if not sigma > 0:
        raise GateDesignError("effective Rabi frequency must be positive")
    if sigma_t0 <= 0:
        raise GateDesignError("sigma_t0 must be positive")
    delta = detuning_for_angle(phi, sigma)
    t0 = sigma_t0 / sigma
    return GateSpec(phi, theta_axis, alpha_axis, sigma, delta, sigma, 2 * t0, t0)


def db_transform(theta: float, alpha: float) -> np.ndarray:
    """2x2 unitary whose columns are the bright and dark states in the qubit basis."""
    c, s = np.cos(0.5 * theta), np.sin(0.5 * theta)
    return np.array(
        [[c, -np.exp(-1j * alpha) * s], [np.exp(1j * alpha) * s, c]], dtype=complex
    )


def embed_qubit_operator(op2, levels: tuple[int, int], dim: int = 8) -> np.ndarray:
    """Place a 2x2 operator on ``levels``, identity elsewhere."""
    out = np.eye(dim, dtype=complex)
    idx = np.ix_(levels, levels)
    out[idx] = op2
    return out


def ideal_db_gate(phi: float) -> np.ndarray:
    """Target on (dark, bright): the bright state picks up ``exp(-i phi)``."""
    return np.diag([1.0, np.exp(-1j * phi)])


def ideal_qubit_gate(phi: float, theta: float, alpha: float) -> np.ndarray:
    """The same target expressed on the two qubit levels."""
    r = db_transform(theta, alpha)
    return r @ np.diag([np.exp(-1j * phi), 1.0]) @ r.conj().T


def rotation_operator(phi: float, axis) -> np.ndarray:
    """SU(2) rotation ``exp(-i phi n.sigma / 2)``."""
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    ns = n[0] * np.array([[0, 1], [1, 0]]) + n[1] * np.array([[0, -1j], [1j, 0]])
    ns = ns + n[2] * np.diag([1, -1])
    return np.cos(phi / 2) * np.eye(2) - 1j * np.sin(phi / 2) * ns


def rotation_axis(theta: float, alpha: float) -> np.ndarray:
    return np.array(
        [np.sin(theta) * np.cos(alpha), np.sin(theta) * np.sin(alpha), np.cos(theta)]
    )


def sech_envelope(t, sigma: float, t0: float):
    return 1.0 / np.cosh(sigma * (np.asarray(t, dtype=float) - t0))


def sech_log_derivative(t, sigma: float, t0: float):
    """``f'/f`` of the sech envelope."""
    return -sigma * np.tanh(sigma * (np.asarray(t, dtype=float) - t0))


def theta_resonant(t, sigma: float, t0: float):
    """Accumulated area ``int_0^t sigma sech(sigma (u - t0)) du``."""
    if sigma <= 0:
        raise GateDesignError("sigma must be positive")
    t = np.asarray(t, dtype=float)
    return 2.0 * (np.arctan(np.exp(sigma * (t - t0))) - np.arctan(np.exp(-sigma * t0)))


def _sech_phase_antiderivative(u, sigma: float, delta: float):
    """Antiderivative of ``sigma sech(sigma u) exp(i delta u)``.

    For ``u <= 0`` the hypergeometric argument ``-exp(2 sigma u)`` sits in
    [-1, 0); for ``u > 0`` the reflected form keeps it there as well.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    b = (sigma + 1j * delta) / (2.0 * sigma)
    out = np.empty(u.shape, dtype=complex)
    neg = u <= 0
    if np.any(neg):
        un = u[neg]
        out[neg] = (
            np.exp((sigma + 1j * delta) * un) * hyp2f1(1.0, b, b + 1.0, -np.exp(2 * sigma * un)) / b
        )
    pos = ~neg
    if np.any(pos):
        up = u[pos]
        out[pos] = np.pi / np.sin(np.pi * b) + np.exp((-sigma + 1j * delta) * up) / (
            b - 1.0
        ) * hyp2f1(1.0, 1.0 - b, 2.0 - b, -np.exp(-2 * sigma * up))
    return out


def theta_pm(t, sigma: float, delta: float, t0: float):
    """Complex areas ``theta_+-(t) = int_0^t sigma sech(sigma (u - t0)) exp(+-i delta u) du``."""
    if sigma <= 0:
        raise GateDesignError("sigma must be positive")
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    out = []
    for d in (delta, -delta):
        k = _sech_phase_antiderivative(t_arr - t0, sigma, d)
        k0 = _sech_phase_antiderivative(np.array([-t0]), sigma, d)[0]
        out.append(np.exp(1j * d * t0) * (k - k0))
    plus, minus = out
    if scalar:
        return plus[0], minus[0]
    return plus, minus


def theta_offresonant(t, sigma: float, delta: float, t0: float):
    """``(theta_+, theta_-, |theta_+|)``."""
    plus, minus = theta_pm(t, sigma, delta, t0)
    return plus, minus, np.abs(plus)


def beam_waist(wavelength: float, na: float) -> float:
    return wavelength / (np.pi * na)


def power_to_field(power: float, wavelength: float, na: float, n: float = N_DIAMOND) -> float:
    """Peak field amplitude (V/m) of a focused Gaussian beam of power ``power`` (W)."""
    if power < 0:
        raise GateDesignError("power must be non-negative")
    w0 = beam_waist(wavelength, na)
    return float(np.sqrt(2.0 * power / (np.pi * w0**2 * const.c * n * const.epsilon_0)))


def field_to_power(e0: float, wavelength: float, na: float, n: float = N_DIAMOND) -> float:
    w0 = beam_waist(wavelength, na)
    return 0.5 * e0**2 * np.pi * w0**2 * const.c * n * const.epsilon_0


def rabi_from_field(e0, overlap, dipole_scale: float, r0: float = 0.53e-10):
    """Rabi frequency (rad/s) for field ``e0`` (V/m) and dimensionless overlap ``e . d``."""
    return dipole_scale * const.e * r0 * np.asarray(e0) * np.asarray(overlap) / const.hbar


def field_for_rabi(omega: float, overlap, dipole_scale: float, r0: float = 0.53e-10) -> float:
    """Inverse of ``rabi_from_field`` for the field magnitude."""
    mag = abs(complex(overlap))
    if mag == 0:
        raise GateDesignError("cannot drive a transition with zero overlap")
    return float(abs(omega) * const.hbar / (dipole_scale * const.e * r0 * mag))


def dipole_moment_debye(dipole_scale: float, r0: float = 0.53e-10) -> float:
    debye = 1e-21 / const.c
    return dipole_scale * const.e * r0 / debye


def simulate_lambda_gate(
    spec: GateSpec, rtol: float = 1e-10, atol: float = 1e-12
) -> tuple[np.ndarray, float]:
    """Propagate the ideal three-level Lambda system for one designed gate.

    Returns the 2x2 qubit block of the propagator (frame rotating with the
    lasers) and the worst-case excited population left at the end.
    """
    om = spec.leg_rabi()

    def rhs(t, y):
        psi = y.reshape(3, 3)
        drive = spec.envelope(t) * np.exp(-1j * spec.delta * t)
        h = np.zeros((3, 3), dtype=complex)
        h[2, 0] = om[0] * drive
        h[2, 1] = om[1] * drive
        h[0, 2] = np.conj(h[2, 0])
        h[1, 2] = np.conj(h[2, 1])
        return (-1j * h @ psi).ravel()

    y0 = np.eye(3, dtype=complex).ravel()
    sol = solve_ivp(
        rhs, (0.0, spec.gate_time), y0, method="DOP853", rtol=rtol, atol=atol
    )
    if not sol.success:
        raise RuntimeError(sol.message)
    u = sol.y[:, -1].reshape(3, 3)
    excited = float(np.max(np.abs(u[2, :2]) ** 2))
    return u[:2, :2], excited
