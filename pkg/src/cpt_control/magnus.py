"""First-order Magnus leakage correction for one modulated laser.

The error and control Hamiltonians are moved numerically into the frame of
the ideal dark-bright evolution and projected on Gell-Mann operators. The
control is a Fourier series of ``1 - cos`` modes added to the complex
envelope of one laser, so it vanishes at both ends of the gate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad_vec

from .defect import transition_index
from .pulses import embed_qubit_operator, theta_offresonant, theta_resonant

DIM = 8
EXCITED_A = 4
EXCITED_C = 6
QUAD_RTOL = 1e-10


class RankDeficient(np.linalg.LinAlgError):
    """The control matrix cannot address as many directions as it has columns."""

    def __init__(self, message: str, singular_values: np.ndarray):
        super().__init__(message)
        self.singular_values = singular_values


def sym_op(j: int, k: int, dim: int = DIM) -> np.ndarray:
    op = np.zeros((dim, dim), dtype=complex)
    op[j, k] = op[k, j] = 1.0
    return op


def asym_op(j: int, k: int, dim: int = DIM) -> np.ndarray:
    op = np.zeros((dim, dim), dtype=complex)
    op[j, k] = -1j
    op[k, j] = 1j
    return op


def diag_op(k: int, dim: int = DIM) -> np.ndarray:
    """Diagonal generator with ``k`` leading ones and ``-k`` on level ``k`` (0-based)."""
    d = np.zeros(dim)
    d[:k] = 1.0
    d[k] = -k
    return np.diag(np.sqrt(2.0 / (k * (k + 1))) * d).astype(complex)


@dataclass(frozen=True)
class Channel:
    name: str
    op: np.ndarray = field(repr=False, compare=False)

    def coefficient(self, h) -> np.ndarray:
        """``Tr(L h) / 2`` for one matrix or a stack of them."""
        return np.real(np.einsum("ij,...ji->...", self.op, h)) / 2.0


def _pair_channels(pairs) -> list[Channel]:
    out = [Channel(f"s{j + 1}{k + 1}", sym_op(j, k)) for j, k in pairs]
    out += [Channel(f"a{j + 1}{k + 1}", asym_op(j, k)) for j, k in pairs]
    return out


def error_channels(dark: int, bright: int) -> list[Channel]:
    """Six channels coupling the dark, bright and A states to C."""
    return _pair_channels([(dark, EXCITED_C), (bright, EXCITED_C), (EXCITED_A, EXCITED_C)])


def control_channels(dark: int, bright: int) -> list[Channel]:
    """Fourteen channels spanned by the control in the ideal frame."""
    d, b, a, c = dark, bright, EXCITED_A, EXCITED_C
    out = _pair_channels([(d, b), (d, a), (d, c), (b, a), (b, c), (a, c)])
    return out + [Channel(f"d{b}", diag_op(b)), Channel(f"d{a}", diag_op(a))]


@dataclass(frozen=True)
class MagnusFrame:
    """Reduced Hamiltonian on the qubit levels, A and C, and its ideal frame."""

    couplings: np.ndarray  # (2, 4, 4), only A and C rows of the qubit levels kept
    detunings: np.ndarray  # (2, 4, 4) laser minus transition frequency
    rotation: np.ndarray  # columns: new basis vectors in the eigenbasis
    dark: int
    bright: int
    omega_eff: float
    delta: float
    sigma: float
    t0: float
    control_laser: int = 0

    def envelope(self, t):
        return 1.0 / np.cosh(self.sigma * (t - self.t0))

    def mixing_angle(self, t) -> float:
        if self.delta == 0.0:
            return float(theta_resonant(t, self.sigma, self.t0))
        return float(theta_offresonant(t, self.sigma, self.delta, self.t0)[2])

    def _drive(self, t, amp) -> np.ndarray:
        h = np.zeros((DIM, DIM), dtype=complex)
        vals = amp * np.exp(-1j * self.detunings * t)
        for e, g in zip(*np.nonzero(np.any(vals != 0, axis=0))):
            h[4 + e, g] = vals[:, e, g].sum()
        return h + h.conj().T

    def lab_hamiltonian(self, t) -> np.ndarray:
        return self._drive(t, self.couplings * self.envelope(t))

    def ideal_db(self, t) -> np.ndarray:
        h = np.zeros((DIM, DIM), dtype=complex)
        h[EXCITED_A, self.bright] = self.omega_eff * self.envelope(t) * np.exp(-1j * self.delta * t)
        return h + h.conj().T

    def to_db(self, h) -> np.ndarray:
        return self.rotation.conj().T @ h @ self.rotation

    def ideal_frame(self, t) -> np.ndarray:
        th = self.mixing_angle(t)
        u = np.eye(DIM, dtype=complex)
        b, a = self.bright, EXCITED_A
        u[b, b] = u[a, a] = np.cos(th)
        u[b, a] = u[a, b] = 1j * np.sin(th)
        return u

    def error_db(self, t) -> np.ndarray:
        return self.to_db(self.lab_hamiltonian(t)) - self.ideal_db(t)

    def error_interaction(self, t) -> np.ndarray:
        u = self.ideal_frame(t)
        return u @ self.error_db(t) @ u.conj().T

    def control_interaction(self, t) -> np.ndarray:
        """Control per unit in-phase and quadrature amplitude, shape ``(2, 8, 8)``."""
        u = self.ideal_frame(t)
        only = np.zeros_like(self.couplings)
        only[self.control_laser] = self.couplings[self.control_laser]
        out = []
        for unit in (1.0, 1j):
            w = self.to_db(self._drive(t, only * unit))
            out.append(u @ w @ u.conj().T)
        return np.array(out)


def magnus_frame(problem, control_laser: int = 0) -> MagnusFrame:
    """Build the reduced frame from a ``GateProblem``."""
    es, spec = problem.es, problem.spec
    levels = problem.qubit_levels
    keep = np.zeros((2, 4, 4), dtype=bool)
    for e in (EXCITED_A - 4, EXCITED_C - 4):
        for g in levels:
            keep[:, e, g] = True
    couplings = np.where(keep, problem.couplings, 0.0)
    det = np.zeros((2, 4, 4))
    for l, w in enumerate(problem.laser_freqs):
        det[l] = w - (es.energies[4:, None] - es.energies[None, :4])
    rot = np.eye(DIM, dtype=complex)
    dark_bright = np.column_stack([spec.dark_state(), spec.bright_state()])
    rot[np.ix_(levels, levels)] = dark_bright
    return MagnusFrame(
        couplings, det, rot, levels[0], levels[1], spec.omega_eff, spec.delta, spec.sigma,
        spec.t0, control_laser,
    )


def leakage_ratios(problem) -> dict:
    """Leakage-to-leg coupling ratios and the phase of the bright-state leakage."""
    legs, leak = problem.choice.legs, problem.choice.leakage
    tab = problem.couplings
    om1 = abs(tab[0][transition_index(legs[0])])
    om2 = abs(tab[1][transition_index(legs[1])])
    c11, c12 = tab[0][transition_index(leak[0])], tab[0][transition_index(leak[1])]
    c21, c22 = tab[1][transition_index(leak[0])], tab[1][transition_index(leak[1])]
    lam1, lam12 = abs(c11) / om1, abs(c12) / om1
    lam21, lam2 = abs(c21) / om2, abs(c22) / om2
    # bright amplitude: s0 + s_up e^{i dgs t} + s_dn e^{-i dgs t}; see bright_leakage
    s0 = (c11 + c22) / om1
    s_up, s_dn = c21 / om1, c12 / om1
    if abs(s_up) > 0 and abs(s_dn) > 0:
        gamma = 0.5 * (np.angle(s_up) + np.angle(s_dn))
        psi = 0.5 * (np.angle(s_up) - np.angle(s_dn))
    else:
        gamma, psi = np.angle(s0) if abs(s0) else 0.0, 0.0
    signed = np.real(s0 * np.exp(-1j * gamma))
    phi_c4 = psi if np.sign(signed) == np.sign(lam1 - lam2) or abs(signed) < 1e-12 else psi + np.pi
    return {
        "lambda1": lam1, "lambda2": lam2, "lambda12": lam12, "lambda21": lam21,
        "phi1": float(np.angle(tab[0][transition_index(legs[0])])),
        "phi_c1": float(np.angle(c11)) if abs(c11) else 0.0,
        "phi_c4": float(np.mod(phi_c4 + np.pi, 2 * np.pi) - np.pi),
    }


def bright_leakage(problem, t) -> np.ndarray:
    """``<C|H|b>`` divided by ``f(t)`` and the leg Rabi frequency, with the
    common carrier ``exp(-i (Delta - delta_es) t)`` removed."""
    frame = magnus_frame(problem)
    out = []
    for tt in np.atleast_1d(t):
        h = frame.to_db(frame._drive(tt, frame.couplings))
        ref = frame.detunings[0][transition_index(problem.choice.leakage[0])]
        out.append(h[EXCITED_C, frame.bright] * np.exp(1j * ref * tt))
    om1 = abs(problem.couplings[0][transition_index(problem.choice.legs[0])])
    return np.sqrt(2.0) * np.array(out) / om1


@dataclass(frozen=True)
class MagnusSystem:
    matrix: np.ndarray  # (14, 2 k_max), columns ordered (in-phase k=1..K, quadrature k=1..K)
    target: np.ndarray  # (14,) minus the error integral per control channel
    h_err: np.ndarray  # (6,) -i times the error integral per error channel
    k_max: int
    gate_time: float
    error_integral: np.ndarray = field(repr=False)  # (8, 8)
    control_integrals: np.ndarray = field(repr=False)  # (2, k_max, 8, 8)
    control_channels: tuple = field(repr=False, default=())
    error_channels: tuple = field(repr=False, default=())
    ratios: dict = field(default_factory=dict)
    control_detuning: float = 0.0
    control_laser: int = 0
    drive_frequency: float = 0.0


def fourier_mode(t, k: int, gate_time: float):
    return 1.0 - np.cos(2.0 * np.pi * k * np.asarray(t) / gate_time)


def assemble_magnus_system(problem, k_max: int = 3, control_laser: int = 0,
                           rtol: float = QUAD_RTOL) -> MagnusSystem:
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    frame = magnus_frame(problem, control_laser)
    T = problem.spec.gate_time
    ks = np.arange(1, k_max + 1)

    def integrand(t):
        v = frame.error_interaction(t)
        w = frame.control_interaction(t)
        modes = fourier_mode(t, ks, T)
        return np.concatenate([v[None], (w[:, None] * modes[None, :, None, None]).reshape(-1, DIM, DIM)])

    scale = np.abs(problem.couplings).max() * T
    total, _ = quad_vec(integrand, 0.0, T, epsrel=rtol, epsabs=rtol * scale, limit=20000)
    v_int = total[0]
    w_int = total[1:].reshape(2, k_max, DIM, DIM)
    errs = error_channels(frame.dark, frame.bright)
    ctrl = control_channels(frame.dark, frame.bright)
    err_names = {c.name for c in errs}
    target = np.array([
        -c.coefficient(v_int) if c.name in err_names else 0.0 for c in ctrl
    ])
    matrix = np.array([c.coefficient(w_int).reshape(-1) for c in ctrl])
    h_err = np.array([-1j * c.coefficient(v_int) for c in errs])
    e, g = transition_index(problem.choice.legs[control_laser])
    return MagnusSystem(
        matrix, target, h_err, k_max, T, v_int, w_int, tuple(ctrl), tuple(errs),
        leakage_ratios(problem), problem.spec.delta, control_laser,
        problem.laser_freqs[control_laser],
    )


@dataclass(frozen=True)
class CorrectionEnvelope:
    """Additive complex envelope for one laser, relative to its nominal coupling.

    Magnus corrections carry Fourier ``coefficients`` of shape ``(2, k_max)``
    (in-phase, quadrature). DRAG corrections carry sampled-analytic callables
    and a rescale factor.
    """

    kind: str
    laser: int
    gate_time: float
    drive_frequency: float = 0.0
    coefficients: np.ndarray | None = None
    in_phase_fn: Callable | None = field(default=None, compare=False, repr=False)
    quadrature_fn: Callable | None = field(default=None, compare=False, repr=False)
    scale: float = 1.0
    residual: float = float("nan")
    singular_values: np.ndarray | None = field(default=None, repr=False)

    def components(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        if self.coefficients is not None:
            k = np.arange(1, self.coefficients.shape[1] + 1)
            modes = fourier_mode(t[..., None], k, self.gate_time)
            return modes @ self.coefficients[0], modes @ self.coefficients[1]
        zero = np.zeros_like(t)
        ip = self.in_phase_fn(t) if self.in_phase_fn else zero
        qu = self.quadrature_fn(t) if self.quadrature_fn else zero
        return self.scale * np.asarray(ip, float), self.scale * np.asarray(qu, float)

    def __call__(self, t):
        ip, qu = self.components(t)
        return ip + 1j * qu

    def is_zero(self) -> bool:
        if self.coefficients is not None:
            return not np.any(self.coefficients)
        return self.scale == 0.0 or (self.in_phase_fn is None and self.quadrature_fn is None)

    def with_scale(self, scale: float) -> "CorrectionEnvelope":
        from dataclasses import replace
        return replace(self, scale=float(scale))

    def sample(self, n: int = 501) -> np.ndarray:
        t = np.linspace(0.0, self.gate_time, n)
        ip, qu = self.components(t)
        return np.column_stack([t, ip, qu])

    def to_csv(self, path, n: int = 501) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "in_phase", "quadrature"])
            for row in self.sample(n):
                w.writerow([f"{x:.12e}" for x in row])


def resonant_k_max(problem, margin: float = 1.25) -> int:
    """Fourier order whose highest mode reaches past the C detuning.

    Low orders only touch the C channels through the far tail of their
    spectrum; modes near ``delta_es T / 2 pi`` address them directly.
    """
    es = problem.es
    delta_es = es.energies[EXCITED_C] - es.energies[EXCITED_A]
    return max(1, int(np.ceil(margin * delta_es * problem.spec.gate_time / (2 * np.pi))))


def solve_magnus(system: MagnusSystem, rcond: float = 1e-10, strict: bool = True) -> CorrectionEnvelope:
    """Minimum-norm least-squares Fourier coefficients.

    ``strict`` raises ``RankDeficient`` whenever the numerical rank is below
    ``min(14, 2 k_max)``. With ``strict=False`` the pseudoinverse simply drops
    directions the control cannot reach (for large ``k_max`` these are the
    dark-A and diagonal channels, whose target is zero).
    """
    b, y = system.matrix, system.target
    sv = np.linalg.svd(b, compute_uv=False)
    need = min(b.shape)
    rank = int(np.sum(sv > rcond * sv[0])) if sv.size and sv[0] > 0 else 0
    if not np.any(y):
        x = np.zeros(b.shape[1])
    else:
        if rank == 0 or (strict and rank < need):
            raise RankDeficient(f"control matrix has rank {rank} < {need}", sv)
        x = np.linalg.lstsq(b, y, rcond=rcond)[0]
    resid = float(np.linalg.norm(b @ x - y))
    return CorrectionEnvelope(
        "magnus", system.control_laser, system.gate_time, system.drive_frequency,
        x.reshape(2, system.k_max), residual=resid, singular_values=sv,
    )


def first_order_residual(system: MagnusSystem, envelope: CorrectionEnvelope) -> tuple[float, float]:
    """``(||int V_I + W_I||_F, ||int V_I||_F)`` with the correction installed."""
    w = np.einsum("mk,mkab->ab", envelope.coefficients, system.control_integrals)
    return (
        float(np.linalg.norm(system.error_integral + w)),
        float(np.linalg.norm(system.error_integral)),
    )


def resynthesize_error(frame: MagnusFrame, t) -> np.ndarray:
    """Rebuild ``V_I(t)`` from its six error-channel coefficients."""
    v = frame.error_interaction(t)
    return sum(c.coefficient(v) * c.op for c in error_channels(frame.dark, frame.bright))


def closed_form_siv_errors(t, ratios: dict, omega: float, sigma: float, t0: float,
                           delta_es: float, delta_gs: float) -> np.ndarray:
    """Resonant SiV error coefficients on the six error channels, written out by hand.

    ``omega`` is the leg Rabi frequency. Order: s(d,C), s(b,C), s(A,C), a(d,C),
    a(b,C), a(A,C). Kept as a cross-check on the numeric projection.
    """
    lam1, lam2, lam12 = ratios["lambda1"], ratios["lambda2"], ratios["lambda12"]
    ph1, pc4 = ratios["phi1"], ratios["phi_c4"]
    f = 1.0 / np.cosh(sigma * (t - t0))
    th = theta_resonant(t, sigma, t0)
    amp = omega * (lam1 - lam2 + 2 * lam12 * np.cos(pc4 + delta_gs * t))
    arg = ph1 / 2 + delta_es * t
    r2 = np.sqrt(2.0)
    return np.array([
        omega * ((lam1 + lam2) * np.cos(t * delta_es)
                 - 2 * lam12 * np.sin(t * delta_es) * np.sin(pc4 + t * delta_gs)) / r2 * f,
        np.cos(th) * np.cos(arg) * amp / r2 * f,
        np.sin(th) * np.sin(arg) * amp / r2 * f,
        omega * ((lam1 + lam2) * np.sin(delta_es * t)
                 + 2 * lam12 * np.cos(delta_es * t) * np.sin(pc4 + delta_gs * t)) / r2 * f,
        np.cos(th) * np.sin(arg) * amp / r2 * f,
        -np.sin(th) * np.cos(arg) * amp / r2 * f,
    ])


def correction_builder(k_max: int = 3, control_laser: int = 0):
    """Callable for ``run_gate``: problem -> per-laser additive envelopes."""

    def build(problem):
        env = solve_magnus(assemble_magnus_system(problem, k_max, control_laser))
        corr = [None, None]
        corr[control_laser] = env
        return tuple(corr)

    return build
