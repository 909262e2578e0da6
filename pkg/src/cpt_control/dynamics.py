"""Lindblad propagation of the driven eight-level system and gate scoring.

Everything runs in the interaction picture of the field-dressed eigenbasis,
so a laser of frequency ``w_l`` couples transition ``(e, g)`` through
``Omega exp(-i (w_l - w_eg) t) |e><g| + h.c.``. Collapse operators are
projectors or transition operators between eigenstates, so the dissipator is
the same in the lab and interaction frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import constants as const
from scipy.integrate import solve_ivp

from .defect import DefectModel, EigenSystem, jt_eigenvectors

DIM = 8
BRIGHT_THRESHOLD = 1e-6


class StepSizeFailure(RuntimeError):
    """The adaptive integrator could not meet the requested tolerance."""


@dataclass(frozen=True)
class CollapseOp:
    name: str
    op: np.ndarray
    rate: float

    @property
    def scaled(self) -> np.ndarray:
        return np.sqrt(self.rate) * self.op


@dataclass(frozen=True)
class LindbladSet:
    ops: tuple[CollapseOp, ...] = ()

    def __len__(self) -> int:
        return len(self.ops)

    def by_kind(self, kind: str) -> list[CollapseOp]:
        return [c for c in self.ops if c.name.startswith(kind)]

    def superoperator(self, dim: int = DIM) -> np.ndarray:
        """Dissipator acting on row-major ``vec(rho)``."""
        eye = np.eye(dim)
        sup = np.zeros((dim * dim, dim * dim), dtype=complex)
        for c in self.ops:
            l = c.scaled
            ldl = l.conj().T @ l
            sup += np.kron(l, l.conj())
            sup -= 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T))
        return sup


def _proj(i: int, j: int) -> np.ndarray:
    m = np.zeros((DIM, DIM), dtype=complex)
    m[i, j] = 1.0
    return m


def boltzmann_rates(t1_orbit: float, gap: float, temperature: float) -> tuple[float, float]:
    """Downward and upward orbital rates for an energy gap in rad/s."""
    x = const.hbar * abs(gap) / (const.k * temperature)
    boltz = np.exp(-x)
    down = 1.0 / (t1_orbit * (1.0 + boltz))
    return down, down * boltz


_ORBITAL_OPS = [
    np.kron(m, np.eye(2))
    for m in (np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1]))
]


def _branches(block: np.ndarray, theta: float, phi: float) -> tuple[list[int], list[int]]:
    """Split a manifold's four states into the lower and upper orbital branch.

    Uses the weight on the zero-field lower doublet, which stays meaningful
    when Zeeman shifts reorder the energies.
    """
    low = jt_eigenvectors(theta, phi)[:, :2]
    weight = np.sum(np.abs(low.conj().T @ block) ** 2, axis=0)
    order = np.argsort(-weight, kind="stable")
    return sorted(order[:2].tolist()), sorted(order[2:].tolist())


def _orbital_pairs(block: np.ndarray, lower, upper) -> list[tuple[int, int]]:
    """Pair each lower-branch state with the upper-branch state of the same spin."""

    def weight(lo, hi):
        return sum(abs(block[:, hi].conj() @ o @ block[:, lo]) ** 2 for o in _ORBITAL_OPS)

    a, b = lower
    c, d = upper
    if weight(a, c) + weight(b, d) >= weight(a, d) + weight(b, c):
        return [(a, c), (b, d)]
    return [(a, d), (b, c)]


def build_collapse_ops(
    model: DefectModel,
    es: EigenSystem,
    field_on: bool | None = None,
    bright_threshold: float = BRIGHT_THRESHOLD,
) -> LindbladSet:
    """Dephasing, spin flips, Boltzmann-weighted orbital relaxation and optical decay."""
    if field_on is None:
        field_on = bool(np.any(es.b_defect))
    ops: list[CollapseOp] = []
    for i in range(DIM):
        ops.append(CollapseOp(f"deph:{i}", _proj(i, i), 1.0 / model.t2_star))

    spin_rate = 1.0 / (2.0 * model.spin_t1(field_on))
    angles = ((model.theta_g, model.phi_g), (model.theta_e, model.phi_e))
    for base, (theta, phi) in zip((0, 4), angles):
        block = es.states[base : base + 4, base : base + 4]
        lower, upper = _branches(block, theta, phi)
        # spin flips stay inside an orbital branch
        for a, b in (lower, upper):
            ops.append(CollapseOp(f"spin:{base + a}<-{base + b}", _proj(base + a, base + b), spin_rate))
            ops.append(CollapseOp(f"spin:{base + b}<-{base + a}", _proj(base + b, base + a), spin_rate))
        for lo, hi in _orbital_pairs(block, lower, upper):
            gap = es.energies[base + hi] - es.energies[base + lo]
            down, up = boltzmann_rates(model.t1_orbit, gap, model.temperature)
            ops.append(CollapseOp(f"orbit:{base + lo}<-{base + hi}", _proj(base + lo, base + hi), down))
            if up > 0:
                ops.append(CollapseOp(f"orbit:{base + hi}<-{base + lo}", _proj(base + hi, base + lo), up))

    mags = np.linalg.norm(es.dipoles, axis=2)
    cut = bright_threshold * mags.max()
    for e in range(4):
        for g in range(4):
            if mags[e, g] > cut:
                ops.append(CollapseOp(f"life:{g}<-{4 + e}", _proj(g, 4 + e), 1.0 / model.tau))
    return LindbladSet(tuple(ops))


@dataclass(frozen=True)
class DriveTerm:
    """``envelope(t) * coupling * exp(-i freq t) |upper><lower| + h.c.``"""

    laser: int
    upper: int
    lower: int
    coupling: complex
    freq: float


@dataclass
class DriveHamiltonian:
    """Callable ``H(t)`` assembled from vectorized drive terms."""

    terms: tuple[DriveTerm, ...]
    envelopes: tuple[Callable, ...]
    drift: np.ndarray | None = None

    def __post_init__(self) -> None:
        self._laser = np.array([t.laser for t in self.terms], dtype=int)
        self._up = np.array([t.upper for t in self.terms], dtype=int)
        self._lo = np.array([t.lower for t in self.terms], dtype=int)
        self._c = np.array([t.coupling for t in self.terms], dtype=complex)
        self._w = np.array([t.freq for t in self.terms], dtype=float)

    def __call__(self, t: float) -> np.ndarray:
        h = np.zeros((DIM, DIM), dtype=complex) if self.drift is None else self.drift.astype(complex)
        if len(self.terms):
            env = np.array([complex(f(t)) for f in self.envelopes])
            vals = env[self._laser] * self._c * np.exp(-1j * self._w * t)
            np.add.at(h, (self._up, self._lo), vals)
            np.add.at(h, (self._lo, self._up), vals.conj())
        return h

    def labels(self, tol: float = 0.0) -> set[tuple[int, int, int]]:
        return {(t.laser, t.upper, t.lower) for t in self.terms if abs(t.coupling) > tol}


def drive_hamiltonian(
    couplings: np.ndarray,
    laser_freqs: Sequence[float],
    es: EigenSystem,
    envelopes: Sequence[Callable],
    counter_rotating: bool = False,
    optical_offset: float = 0.0,
    prune: float = 1e-12,
) -> DriveHamiltonian:
    """Interaction-frame drive built from ``couplings[laser, e, g]`` (rad/s).

    ``laser_freqs`` are measured from the optical offset, like the transition
    frequencies in ``es``. With ``counter_rotating`` each term also gets its
    partner at ``-(w_l + w_eg + 2 optical_offset)``.
    """
    couplings = np.asarray(couplings, dtype=complex)
    scale = np.abs(couplings).max() if couplings.size else 0.0
    terms = []
    for l, w_l in enumerate(laser_freqs):
        for e in range(4):
            for g in range(4):
                c = couplings[l, e, g]
                if scale == 0.0 or abs(c) <= prune * scale:
                    continue
                w_eg = es.energies[4 + e] - es.energies[g]
                terms.append(DriveTerm(l, 4 + e, g, c, w_l - w_eg))
                if counter_rotating:
                    terms.append(DriveTerm(l, 4 + e, g, c, -(w_l + w_eg + 2 * optical_offset)))
    return DriveHamiltonian(tuple(terms), tuple(envelopes))


@dataclass(frozen=True)
class Propagation:
    times: np.ndarray
    states: np.ndarray  # (n_t, batch, 8, 8)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def propagate(
    hamiltonian: Callable[[float], np.ndarray],
    lindblad: LindbladSet,
    rho0: np.ndarray,
    t_final: float,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    t_eval: np.ndarray | None = None,
    max_step: float = np.inf,
) -> Propagation:
    """Integrate ``d rho/dt = -i[H, rho] + D(rho)`` from 0 to ``t_final``.

    ``rho0`` may be one matrix or a batch ``(n, 8, 8)``; operators that are
    not density matrices (e.g. ``|i><j|``) are allowed, the map is linear.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    single = rho0.ndim == 2
    batch = rho0[None] if single else rho0
    n, dim, _ = batch.shape
    sup = lindblad.superoperator(dim) if len(lindblad) else None

    def rhs(t, y):
        rho = y.reshape(n, dim, dim)
        h = hamiltonian(t)
        out = -1j * (h @ rho - rho @ h)
        if sup is not None:
            out = out + (rho.reshape(n, dim * dim) @ sup.T).reshape(n, dim, dim)
        return out.ravel()

    if t_final == 0:
        states = batch[None].copy()
        return Propagation(np.array([0.0]), states[:, 0] if single else states)
    sol = solve_ivp(
        rhs,
        (0.0, t_final),
        batch.ravel(),
        method="DOP853",
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        max_step=max_step,
    )
    if not sol.success:
        raise StepSizeFailure(sol.message)
    states = sol.y.T.reshape(-1, n, dim, dim)
    if single:
        states = states[:, 0]
    return Propagation(sol.t, states)


AXIAL_STATES = (
    np.array([1, 0], dtype=complex),
    np.array([0, 1], dtype=complex),
    np.array([1, 1], dtype=complex) / np.sqrt(2),
    np.array([1, -1], dtype=complex) / np.sqrt(2),
    np.array([1, 1j], dtype=complex) / np.sqrt(2),
    np.array([1, -1j], dtype=complex) / np.sqrt(2),
)


@dataclass(frozen=True)
class QubitChannel:
    """Images of ``|q_i><q_j|`` under the full eight-level evolution."""

    images: np.ndarray  # (2, 2, 8, 8)
    levels: tuple[int, int]

    def apply(self, psi) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        return np.einsum("i,j,ijab->ab", psi, psi.conj(), self.images)

    def qubit_block(self, psi) -> np.ndarray:
        rho = self.apply(psi)
        return rho[np.ix_(self.levels, self.levels)]

    def leakage(self) -> float:
        """Mean population outside the qubit levels over the axial inputs."""
        out = []
        for psi in AXIAL_STATES:
            rho = self.apply(psi)
            out.append(1.0 - np.real(rho[self.levels[0], self.levels[0]] + rho[self.levels[1], self.levels[1]]))
        return float(np.mean(out))


def qubit_channel(
    hamiltonian: Callable[[float], np.ndarray],
    lindblad: LindbladSet,
    levels: tuple[int, int],
    t_final: float,
    **kwargs,
) -> QubitChannel:
    """Propagate the four operators ``|q_i><q_j|`` in one batch."""
    basis = np.zeros((4, DIM, DIM), dtype=complex)
    for k, (i, j) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        basis[k, levels[i], levels[j]] = 1.0
    final = propagate(hamiltonian, lindblad, basis, t_final, **kwargs).final
    return QubitChannel(final.reshape(2, 2, DIM, DIM), tuple(levels))


def gate_fidelity(channel, ideal: np.ndarray) -> float:
    """Mean of ``<psi| U^dag rho_out U |psi>`` over the six axial states.

    ``channel`` is a ``QubitChannel`` or any callable mapping a qubit state
    vector to its 2x2 output block; population lost from the qubit levels
    simply lowers the overlap.
    """
    block = channel.qubit_block if isinstance(channel, QubitChannel) else channel
    ideal = np.asarray(ideal, dtype=complex)
    vals = []
    for psi in AXIAL_STATES:
        target = ideal @ psi
        vals.append(np.real(target.conj() @ block(psi) @ target))
    return float(np.clip(np.mean(vals), 0.0, 1.0))


def density_diagnostics(rho: np.ndarray) -> dict:
    rho = np.asarray(rho)
    herm = 0.5 * (rho + rho.conj().T)
    return {
        "trace": float(np.real(np.trace(rho))),
        "purity": float(np.real(np.trace(rho @ rho))),
        "min_eig": float(np.linalg.eigvalsh(herm).min()),
        "hermiticity": float(np.abs(rho - rho.conj().T).max()),
    }
