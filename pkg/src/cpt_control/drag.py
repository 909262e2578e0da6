"""First-order DRAG envelopes for the dark-bright Lambda gate.

Both defects share one structure: with ``a(t)`` the bright-to-C leakage
amplitude in units of the leg Rabi frequency, the in-phase correction is
``Delta a^2 / (16 d_es)`` and the quadrature is
``a (2 a' + a f'/f) / (16 d_es)``, both relative to the leg Rabi frequency
and multiplying the sech envelope. The in-phase part goes on laser 1 and the
quadrature on laser 2, so a resonant gate leaves laser 1 untouched.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .magnus import CorrectionEnvelope, leakage_ratios
from .pulses import sech_envelope, sech_log_derivative

RESCALE_GRID = tuple(np.round(np.linspace(-3.9, 3.9, 79), 10))


@dataclass(frozen=True)
class DragParameters:
    species: str
    lambda1: float
    lambda2: float
    lambda12: float
    lambda21: float
    phi_c4: float
    delta: float
    delta_es: float
    delta_gs: float
    sigma: float
    t0: float
    # the squared SiV in-phase amplitude uses lambda12 in the cross term
    cross_is_lambda12: bool = True


def drag_parameters(problem, cross_is_lambda12: bool = True) -> DragParameters:
    es, spec = problem.es, problem.spec
    r = leakage_ratios(problem)
    lo, hi = problem.qubit_levels
    return DragParameters(
        problem.model.species, r["lambda1"], r["lambda2"], r["lambda12"], r["lambda21"],
        r["phi_c4"], spec.delta, es.energies[6] - es.energies[4],
        abs(es.energies[hi] - es.energies[lo]), spec.sigma, spec.t0, cross_is_lambda12,
    )


def _siv_amplitude(t, p: DragParameters, cross: float):
    return p.lambda1 - p.lambda2 + 2 * cross * np.cos(t * p.delta_gs + p.phi_c4)


def siv_in_phase(t, p: DragParameters):
    cross = p.lambda12 if p.cross_is_lambda12 else p.lambda1 * p.lambda2
    return p.delta * _siv_amplitude(t, p, cross) ** 2 / (16 * p.delta_es)


def siv_quadrature(t, p: DragParameters):
    amp = _siv_amplitude(t, p, p.lambda12)
    drift = (
        -4 * p.delta_gs * p.lambda12 * np.sin(t * p.delta_gs + p.phi_c4)
        + amp * sech_log_derivative(t, p.sigma, p.t0)
    )
    return amp * drift / (16 * p.delta_es)


def snv_in_phase(t, p: DragParameters):
    core = (p.lambda1 + p.lambda2) ** 2 + 2 * p.lambda21**2 * (1 - np.cos(2 * p.delta_gs * t))
    return p.delta * core / (16 * p.delta_es)


def snv_quadrature(t, p: DragParameters):
    s = np.sin(t * p.delta_gs)
    drift = 2 * p.delta_gs * np.cos(t * p.delta_gs) + sech_log_derivative(t, p.sigma, p.t0) * s
    return p.lambda21**2 * s * drift / (4 * p.delta_es)


def generator_bA(t, p: DragParameters, omega0: float):
    """Frame generator element coupling bright and A (dimensionless)."""
    if p.species == "SiV":
        sq = _siv_amplitude(t, p, p.lambda12) ** 2
    else:
        sq = (p.lambda1 + p.lambda2) ** 2 + 2 * p.lambda21**2 * (1 - np.cos(2 * p.delta_gs * t))
    return omega0 * sq * sech_envelope(t, p.sigma, p.t0) / (8 * np.sqrt(2.0) * p.delta_es)


_FORMS = {"SiV": (siv_in_phase, siv_quadrature), "SnV": (snv_in_phase, snv_quadrature)}


def relative_corrections(t, p: DragParameters) -> tuple[np.ndarray, np.ndarray]:
    """In-phase and quadrature corrections divided by the leg Rabi frequency."""
    ip, qu = _FORMS[p.species]
    return ip(t, p), qu(t, p)


def drag_envelopes(problem, scale: float = 1.0, cross_is_lambda12: bool = True,
                   params: DragParameters | None = None) -> tuple:
    """Additive envelopes ``(laser 1, laser 2)``; laser 1 is ``None`` when resonant."""
    p = params or drag_parameters(problem, cross_is_lambda12)
    ip, qu = _FORMS[p.species]
    T = problem.spec.gate_time

    def env(t):
        return sech_envelope(t, p.sigma, p.t0)

    first = None
    if p.delta != 0.0:
        first = CorrectionEnvelope(
            "drag", 0, T, problem.laser_freqs[0], in_phase_fn=lambda t: env(t) * ip(t, p),
            scale=scale,
        )
    second = CorrectionEnvelope(
        "drag", 1, T, problem.laser_freqs[1], quadrature_fn=lambda t: env(t) * qu(t, p),
        scale=scale,
    )
    return first, second


@dataclass(frozen=True)
class AmplitudeSearch:
    scale: float
    fidelity: float
    grid: tuple
    values: tuple


def optimize_correction_amplitude(
    score: Callable[[float], float],
    grid: Sequence[float] = RESCALE_GRID,
    workers: int = 1,
    tie_tol: float = 1e-12,
) -> AmplitudeSearch:
    """Grid search for the rescale factor maximizing ``score``.

    Ties within ``tie_tol`` go to the smallest ``|c|``, then the smaller ``c``.
    """
    grid = tuple(float(c) for c in grid)
    if not grid:
        raise ValueError("empty rescale grid")
    if any(abs(c) >= 4 for c in grid):
        raise ValueError("rescale factors must satisfy |c| < 4")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            vals = tuple(pool.map(score, grid))
    else:
        vals = tuple(score(c) for c in grid)
    best = max(vals)
    ties = [c for c, v in zip(grid, vals) if v >= best - tie_tol]
    c_best = min(ties, key=lambda c: (abs(c), c))
    return AmplitudeSearch(c_best, vals[grid.index(c_best)], grid, vals)


def correction_builder(scale: float = 1.0, cross_is_lambda12: bool = True):
    def build(problem):
        return drag_envelopes(problem, scale, cross_is_lambda12)

    return build
