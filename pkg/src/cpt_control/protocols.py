"""Assemble and score CPT gates for the naive, orthogonal and corrected schemes."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .defect import DefectModel, EigenSystem, MagneticField, eigensystem_for_field, transition_index
from .dynamics import (
    LindbladSet,
    QubitChannel,
    build_collapse_ops,
    drive_hamiltonian,
    gate_fidelity,
    qubit_channel,
)
from .polarization import (
    DegeneratePlane,
    PolarizationSolution,
    coupling_table,
    naive_polarizations,
    solve_crosstalk_free,
    solve_leakage_nulling,
)
from .pulses import (
    FIELD_CAPS,
    SIGMA_T0_DEFAULT,
    GateSpec,
    LaserField,
    design_cpt_gate,
    ideal_qubit_gate,
    rabi_from_field,
)

PROTOCOLS = ("naive", "orthogonal", "magnus", "drag")


class FieldCapExceeded(ValueError):
    """A laser would need a field amplitude above the configured cap."""


class WeakLambdaWarning(UserWarning):
    """One Lambda leg is too weakly allowed to be driven efficiently."""


@dataclass(frozen=True)
class LambdaChoice:
    legs: tuple[str, str]
    plane: str
    leakage: tuple[str, str]

    @property
    def qubit_levels(self) -> tuple[int, int]:
        return transition_index(self.legs[0])[1], transition_index(self.legs[1])[1]

    @property
    def excited_level(self) -> int:
        e1, e2 = transition_index(self.legs[0])[0], transition_index(self.legs[1])[0]
        if e1 != e2:
            raise ValueError(f"legs {self.legs} do not share an excited state")
        return 4 + e1


def default_lambda(species: str, field_on: bool) -> LambdaChoice:
    """The Lambda systems and polarization planes used for each regime."""
    if species == "SiV":
        if field_on:
            return LambdaChoice(("A1", "A2"), "xz", ("C1", "C2"))
        return LambdaChoice(("A1", "A4"), "xz", ("C1", "C4"))
    if species == "SnV":
        if field_on:
            return LambdaChoice(("A1", "A3"), "xz", ("C1", "C3"))
        return LambdaChoice(("A2", "A4"), "yz", ("C2", "C4"))
    raise ValueError(f"unknown species {species!r}")


@dataclass(frozen=True)
class GateProblem:
    """Everything needed to simulate one gate: frame data, lasers and couplings."""

    model: DefectModel
    es: EigenSystem
    choice: LambdaChoice
    spec: GateSpec
    polarization: PolarizationSolution
    lasers: tuple[LaserField, LaserField]
    couplings: np.ndarray  # (2, 4, 4) rad/s at unit envelope
    laser_freqs: tuple[float, float]
    lindblad: LindbladSet
    protocol: str = "orthogonal"

    @property
    def qubit_levels(self) -> tuple[int, int]:
        return self.choice.qubit_levels

    @property
    def ideal(self) -> np.ndarray:
        return ideal_qubit_gate(self.spec.phi, self.spec.theta_axis, self.spec.alpha_axis)

    @property
    def max_field(self) -> float:
        return max(l.amplitude for l in self.lasers)

    def leg_couplings(self) -> np.ndarray:
        out = []
        for l, label in enumerate(self.choice.legs):
            e, g = transition_index(label)
            out.append(self.couplings[l, e, g])
        return np.array(out)


def solve_polarization(
    protocol: str, es: EigenSystem, model: DefectModel, choice: LambdaChoice
) -> PolarizationSolution:
    if protocol == "naive":
        return naive_polarizations(es, choice.legs)
    if protocol == "leakage-null":
        return solve_leakage_nulling(es, model, choice.legs, choice.leakage, choice.plane)
    return solve_crosstalk_free(es, choice.legs, choice.plane)


def _unit_rabi(model: DefectModel, vec, dipole) -> complex:
    return complex(rabi_from_field(1.0, np.dot(vec, dipole), model.dipole_scale, model.r0))


def build_gate(
    model: DefectModel,
    spec: GateSpec,
    field: MagneticField | None = None,
    protocol: str = "orthogonal",
    choice: LambdaChoice | None = None,
    es: EigenSystem | None = None,
    field_cap: float | None = None,
    enforce_cap: bool = True,
) -> GateProblem:
    """Set laser amplitudes and phases so the legs see ``Omega_eff <b|``.

    Laser ``l`` is tuned ``spec.delta`` above its own leg. ``field_cap`` (V/m)
    defaults to the species cap; exceeding it raises ``FieldCapExceeded``
    unless ``enforce_cap`` is false.
    """
    field = field or MagneticField()
    es = es or eigensystem_for_field(model, field)
    choice = choice or default_lambda(model.species, not field.is_zero)
    pol = solve_polarization(protocol, es, model, choice)
    targets = spec.leg_rabi()
    amps, phases, freqs = [], [], []
    for l, label in enumerate(choice.legs):
        unit = _unit_rabi(model, pol.vectors[l], es.dipole(label))
        if abs(unit) == 0:
            raise ValueError(f"laser {l + 1} does not couple to {label}")
        amps.append(abs(targets[l]) / abs(unit))
        phases.append(np.angle(targets[l]) - np.angle(unit) if abs(targets[l]) > 0 else 0.0)
        freqs.append(es.transition_frequency(label) + spec.delta)
    cap = FIELD_CAPS.get(model.species, np.inf) if field_cap is None else field_cap
    if enforce_cap and max(amps) > cap * (1 + 1e-12):
        raise FieldCapExceeded(f"needs E0 = {max(amps):.3e} V/m above cap {cap:.3e} V/m")
    table = coupling_table(pol, es, model, amps, phases)
    lasers = tuple(
        LaserField(pol.vectors[l], spec.delta, amps[l], spec, phases[l]) for l in range(2)
    )
    lind = build_collapse_ops(model, es, field_on=not field.is_zero)
    return GateProblem(model, es, choice, spec, pol, lasers, table, tuple(freqs), lind, protocol)


def rabi_for_fixed_field(
    model: DefectModel,
    field: MagneticField,
    e0: float,
    choice: LambdaChoice | None = None,
    protocol: str = "orthogonal",
    weak_ratio: float = 0.1,
) -> tuple[float, EigenSystem, LambdaChoice]:
    """Effective Rabi frequency when neither laser may exceed amplitude ``e0``.

    Both legs need the same Rabi frequency, so the weaker leg sets it. A
    ``WeakLambdaWarning`` is emitted when one leg couples less than
    ``weak_ratio`` times as strongly as the other. A plane of ``"auto"`` is
    resolved with :func:`strongest_plane`; the resolved choice is returned.
    """
    es = eigensystem_for_field(model, field)
    choice = choice or default_lambda(model.species, not field.is_zero)
    bright = es.bright_transitions()
    if any(label not in bright for label in choice.legs):
        warnings.warn(f"Lambda legs {choice.legs} include a dark transition", WeakLambdaWarning,
                      stacklevel=2)
        return 0.0, es, choice
    if choice.plane == "auto":
        choice = replace(choice, plane=strongest_plane(model, es, choice.legs))
    pol = solve_polarization(protocol, es, model, choice)
    weak, strong = _leg_units(model, es, pol, choice.legs)
    if strong == 0 or weak < weak_ratio * strong:
        warnings.warn(
            f"Lambda legs {choice.legs} couple with ratio {weak / strong if strong else 0:.3g}",
            WeakLambdaWarning,
            stacklevel=2,
        )
    return float(np.sqrt(2.0) * weak * e0), es, choice


def _leg_units(model, es, pol, legs) -> tuple[float, float]:
    units = [abs(_unit_rabi(model, vec, es.dipole(label))) for vec, label in zip(pol.vectors, legs)]
    return min(units), max(units)


def strongest_plane(model: DefectModel, es: EigenSystem, legs: tuple[str, str]) -> str:
    """Cross-talk-free plane whose weaker leg couples most strongly.

    Ties keep the first of xz, yz, xy.
    """
    best, best_weak = None, -1.0
    for plane in ("xz", "yz", "xy"):
        try:
            pol = solve_crosstalk_free(es, legs, plane)
        except DegeneratePlane:
            continue
        weak = _leg_units(model, es, pol, legs)[0]
        if weak > best_weak * (1 + 1e-12):
            best, best_weak = plane, weak
    if best is None:
        raise DegeneratePlane(f"no plane isolates the legs {legs}")
    return best


@dataclass(frozen=True)
class GateResult:
    fidelity: float
    leakage: float
    gate_time: float
    max_field: float
    channel: QubitChannel | None = field(default=None, compare=False, repr=False)
    setting: dict = field(default_factory=dict, compare=False)


def laser_envelopes(problem: GateProblem, corrections: Sequence[Callable | None] = (None, None)):
    """Complex envelope of each laser: sech plus any additive correction."""
    spec = problem.spec
    envs = []
    for corr in corrections:
        if corr is None or (hasattr(corr, "is_zero") and corr.is_zero()):
            envs.append(spec.envelope)
        else:
            envs.append(lambda t, c=corr: spec.envelope(t) + c(t))
    return envs


def simulate(
    problem: GateProblem,
    corrections: Sequence[Callable | None] = (None, None),
    dissipation: bool = True,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> GateResult:
    envs = laser_envelopes(problem, corrections)
    ham = drive_hamiltonian(problem.couplings, problem.laser_freqs, problem.es, envs)
    lind = problem.lindblad if dissipation else LindbladSet()
    chan = qubit_channel(ham, lind, problem.qubit_levels, problem.spec.gate_time, rtol=rtol, atol=atol)
    fid = gate_fidelity(chan, problem.ideal)
    peak = corrected_peak_field(problem, corrections)
    return GateResult(fid, chan.leakage(), problem.spec.gate_time, peak, chan)


def corrected_peak_field(problem: GateProblem, corrections=(None, None), samples: int = 2001) -> float:
    """Largest field amplitude either laser reaches with its corrected envelope."""
    t = np.linspace(0.0, problem.spec.gate_time, samples)
    peak = 0.0
    for laser, env in zip(problem.lasers, laser_envelopes(problem, corrections)):
        peak = max(peak, laser.amplitude * float(np.abs(env(t)).max()))
    return peak


def run_gate(
    model: DefectModel,
    phi: float,
    gate_time: float,
    protocol: str = "orthogonal",
    field: MagneticField | None = None,
    choice: LambdaChoice | None = None,
    sigma_t0: float = SIGMA_T0_DEFAULT,
    corrections_builder: Callable | None = None,
    **kwargs,
) -> GateResult:
    """Design, build and simulate one gate at a given gate time."""
    spec = design_cpt_gate(phi, gate_time=gate_time, sigma_t0=sigma_t0)
    problem = build_gate(model, spec, field, _base_protocol(protocol), choice, **kwargs)
    corr = corrections_builder(problem) if corrections_builder else (None, None)
    return simulate(problem, corr)


def _base_protocol(protocol: str) -> str:
    if protocol not in PROTOCOLS and protocol != "leakage-null":
        raise ValueError(f"unknown protocol {protocol!r}")
    return "orthogonal" if protocol in ("magnus", "drag") else protocol


@dataclass(frozen=True)
class CorrectionOptions:
    k_max_values: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    rescale_grid: tuple[float, ...] = tuple(np.round(np.linspace(-3.5, 3.5, 15), 10))
    cross_is_lambda12: bool = True
    # also try one order reaching the C detuning, with rank-tolerant solving
    resonant_modes: bool = False


def evaluate_protocol(
    model: DefectModel,
    phi: float,
    gate_time: float,
    protocol: str = "orthogonal",
    field: MagneticField | None = None,
    choice: LambdaChoice | None = None,
    sigma_t0: float = SIGMA_T0_DEFAULT,
    options: CorrectionOptions = CorrectionOptions(),
    field_cap: float | None = None,
    enforce_cap: bool = True,
    dissipation: bool = True,
    rtol: float = 1e-8,
    atol: float = 1e-10,
) -> GateResult:
    """Best gate a protocol achieves at one gate time.

    Magnus searches ``k_max`` and DRAG its rescale factor; corrected
    envelopes must also respect the field cap. Raises ``FieldCapExceeded``
    when no admissible setting exists.
    """
    from . import drag, magnus

    spec = design_cpt_gate(phi, gate_time=gate_time, sigma_t0=sigma_t0)
    problem = build_gate(model, spec, field, _base_protocol(protocol), choice,
                         field_cap=field_cap, enforce_cap=enforce_cap)
    cap = FIELD_CAPS.get(model.species, np.inf) if field_cap is None else field_cap
    if not enforce_cap:
        cap = np.inf

    def run(corr, setting):
        if corrected_peak_field(problem, corr) > cap * (1 + 1e-12):
            return None
        res = simulate(problem, corr, dissipation, rtol, atol)
        return replace(res, setting=setting)

    if protocol in ("naive", "orthogonal", "leakage-null"):
        return replace(simulate(problem, (None, None), dissipation, rtol, atol), setting={})
    candidates = []
    if protocol == "magnus":
        for k in options.k_max_values:
            try:
                env = magnus.solve_magnus(magnus.assemble_magnus_system(problem, k))
            except magnus.RankDeficient:
                continue
            candidates.append(run((env, None), {"k_max": k}))
        if options.resonant_modes:
            k = magnus.resonant_k_max(problem)
            env = magnus.solve_magnus(magnus.assemble_magnus_system(problem, k), strict=False)
            candidates.append(run((env, None), {"k_max": k, "resonant": True}))
    else:
        params = drag.drag_parameters(problem, options.cross_is_lambda12)
        for c in options.rescale_grid:
            corr = drag.drag_envelopes(problem, c, params=params)
            candidates.append(run(corr, {"rescale": float(c)}))
    candidates = [c for c in candidates if c is not None]
    if not candidates:
        raise FieldCapExceeded("no correction setting stays within the field cap")
    key = (lambda r: (r.fidelity, -r.setting.get("k_max", 0), -abs(r.setting.get("rescale", 0.0))))
    return max(candidates, key=key)
