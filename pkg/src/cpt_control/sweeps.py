"""Protocol scans, magnetic-field sweeps and detuning maps.

Every sweep is a list of independent work items run serially or on a process
pool; records are sorted on fixed keys afterwards so the output does not
depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import platform
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy

from . import __version__
from .config import RunConfig, config_summary
from .defect import DefectModel, MagneticField
from .protocols import (
    CorrectionOptions,
    FieldCapExceeded,
    GateResult,
    WeakLambdaWarning,
    build_gate,
    evaluate_protocol,
    rabi_for_fixed_field,
    simulate,
)
from .pulses import FIELD_CAPS, design_cpt_gate, rotation_angle

PROTOCOL_COLUMNS = ("angle", "protocol", "optimal_T_s", "infidelity", "leakage_pop")
FIELD_COLUMNS = ("B_par", "B_perp", "fidelity", "gate_time_s")
DETUNING_COLUMNS = ("gate_time_s", "detuning_GHz", "rotation_angle", "fidelity", "over_cap")


@dataclass(frozen=True)
class SweepResult:
    kind: str
    columns: tuple[str, ...]
    records: tuple[dict, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def column(self, name: str) -> list:
        return [r[name] for r in self.records]


@dataclass(frozen=True)
class ScanPoint:
    gate_time: float
    fidelity: float
    leakage: float
    max_field: float
    setting: dict


@dataclass(frozen=True)
class GateTimeScan:
    best: ScanPoint | None
    points: tuple[ScanPoint, ...]
    skipped: tuple[float, ...]  # gate times rejected by the field cap


def _point(res: GateResult) -> ScanPoint:
    return ScanPoint(res.gate_time, res.fidelity, res.leakage, res.max_field, dict(res.setting))


def optimize_gate_time(
    evaluate: Callable[[float], GateResult],
    times: Sequence[float],
    refine: int = 8,
    stop_margin: float = 0.02,
) -> GateTimeScan:
    """Ascending coarse scan with early stop, then a log refinement around the best.

    ``evaluate`` may raise ``FieldCapExceeded``; those times are skipped. The
    coarse scan stops once fidelity falls ``stop_margin`` below the best so far.
    """
    times = np.sort(np.asarray(times, dtype=float))
    points, skipped = [], []
    best_i = None
    for i, t in enumerate(times):
        try:
            p = _point(evaluate(float(t)))
        except FieldCapExceeded:
            skipped.append(float(t))
            continue
        points.append((i, p))
        if best_i is None or p.fidelity > points[best_i][1].fidelity:
            best_i = len(points) - 1
        elif p.fidelity < points[best_i][1].fidelity - stop_margin:
            break
    if best_i is None:
        return GateTimeScan(None, (), tuple(skipped))
    idx = points[best_i][0]
    if refine > 0 and len(times) > 1:
        lo = times[max(idx - 1, 0)]
        hi = times[min(idx + 1, len(times) - 1)]
        for t in np.geomspace(lo, hi, refine + 2)[1:-1]:
            if np.any(np.isclose(t, times, rtol=1e-12, atol=0)):
                continue
            try:
                points.append((-1, _point(evaluate(float(t)))))
            except FieldCapExceeded:
                skipped.append(float(t))
    pts = sorted((p for _, p in points), key=lambda p: p.gate_time)
    best = max(pts, key=lambda p: (p.fidelity, -p.gate_time))
    return GateTimeScan(best, tuple(pts), tuple(sorted(skipped)))


def _pool_map(fn, items: list, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# --- protocol scan ---------------------------------------------------------

@dataclass(frozen=True)
class _ScanJob:
    model: DefectModel
    phi: float
    protocol: str
    times: tuple[float, ...]
    refine: int
    stop_margin: float
    sigma_t0: float
    options: CorrectionOptions
    enforce_cap: bool
    rtol: float
    atol: float


def _run_scan_job(job: _ScanJob) -> tuple[_ScanJob, GateTimeScan]:
    def evaluate(t):
        return evaluate_protocol(
            job.model, job.phi, t, job.protocol, sigma_t0=job.sigma_t0, options=job.options,
            enforce_cap=job.enforce_cap, rtol=job.rtol, atol=job.atol,
        )

    return job, optimize_gate_time(evaluate, job.times, job.refine, job.stop_margin)


def run_protocol_scan(cfg: RunConfig) -> SweepResult:
    start = time.time()
    model = cfg.model()
    jobs = [
        _ScanJob(model, phi, proto, tuple(cfg.gate_times()), cfg.gate_time_refine,
                 cfg.stop_margin, cfg.sigma_t0, cfg.corrections, not cfg.allow_over_cap,
                 cfg.rtol, cfg.atol)
        for phi in cfg.angles
        for proto in cfg.protocols
    ]
    records, scans = [], []
    for job, scan in _pool_map(_run_scan_job, jobs, cfg.workers):
        b = scan.best
        records.append({
            "angle": job.phi,
            "protocol": job.protocol,
            "optimal_T_s": b.gate_time if b else float("nan"),
            "infidelity": 1.0 - b.fidelity if b else float("nan"),
            "leakage_pop": b.leakage if b else float("nan"),
        })
        scans.append({
            "angle": job.phi, "protocol": job.protocol,
            "setting": b.setting if b else {},
            "max_field_V_per_m": b.max_field if b else None,
            "points": [[p.gate_time, p.fidelity, p.leakage] for p in scan.points],
            "skipped_over_cap": list(scan.skipped),
        })
    order = {p: i for i, p in enumerate(cfg.protocols)}
    key = lambda r: (r["angle"], order[r["protocol"]])  # noqa: E731
    records.sort(key=key)
    scans.sort(key=key)
    meta = _metadata(cfg, start, scans=scans)
    return SweepResult("protocol_scan", PROTOCOL_COLUMNS, tuple(records), meta)


# --- field sweep -------------------------------------------------------------

@dataclass(frozen=True)
class _FieldJob:
    model: DefectModel
    field: MagneticField
    e0: float
    phi: float
    sigma_t0: float
    rtol: float
    atol: float
    species_choice: object


def _run_field_job(job: _FieldJob) -> dict:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", WeakLambdaWarning)
        omega, es, choice = rabi_for_fixed_field(job.model, job.field, job.e0,
                                                 job.species_choice)
    weak = any(issubclass(w.category, WeakLambdaWarning) for w in caught)
    rec = {"B_par": job.field.b_par, "B_perp": job.field.b_perp, "weak_lambda": weak,
           "plane": choice.plane}
    if omega <= 0:
        return {**rec, "fidelity": 0.0, "gate_time_s": float("inf"), "leakage_pop": 1.0}
    spec = design_cpt_gate(job.phi, omega_eff=omega, sigma_t0=job.sigma_t0)
    problem = build_gate(job.model, spec, job.field, "orthogonal", choice, es,
                         enforce_cap=False)
    res = simulate(problem, rtol=job.rtol, atol=job.atol)
    return {**rec, "fidelity": res.fidelity, "gate_time_s": spec.gate_time,
            "leakage_pop": res.leakage}


def run_field_sweep(cfg: RunConfig, phi: float | None = None) -> SweepResult:
    """Fidelity and gate time over the configured (B_par, B_perp) grid at fixed laser field."""
    if cfg.b_par is None or cfg.b_perp is None:
        raise ValueError("field sweep needs field.b_par_T and field.b_perp_T grids")
    start = time.time()
    model = cfg.model()
    e0 = cfg.laser_field if cfg.laser_field is not None else FIELD_CAPS[cfg.species]
    phi = cfg.angles[0] if phi is None else phi
    choice = cfg.lambda_choice(True)
    # an exact zero-field grid point falls back to the zero-field Lambda system
    zero_choice = cfg.lambda_choice(False)
    jobs = [
        _FieldJob(model, f, e0, phi, cfg.sigma_t0, cfg.rtol, cfg.atol,
                  zero_choice if f.is_zero else choice)
        for f in cfg.field_points()
    ]
    records = sorted(_pool_map(_run_field_job, jobs, cfg.workers),
                     key=lambda r: (r["B_perp"], r["B_par"]))
    weak = [(r["B_par"], r["B_perp"]) for r in records if r["weak_lambda"]]
    if weak:
        warnings.warn(f"{len(weak)} grid points have a weak Lambda leg", WeakLambdaWarning,
                      stacklevel=2)
    meta = _metadata(cfg, start, laser_field_V_per_m=e0, legs=list(choice.legs),
                     weak_points=weak, angle=phi)
    return SweepResult("field_sweep", FIELD_COLUMNS, tuple(records), meta)


# --- detuning map ------------------------------------------------------------

@dataclass(frozen=True)
class _DetuningJob:
    model: DefectModel
    gate_time: float
    detuning: float
    sigma_t0: float
    rtol: float
    atol: float


def _run_detuning_job(job: _DetuningJob) -> dict:
    spec0 = design_cpt_gate(np.pi, gate_time=job.gate_time, sigma_t0=job.sigma_t0)
    phi = rotation_angle(spec0.sigma, job.detuning)
    spec = replace(spec0, phi=phi, delta=job.detuning)
    problem = build_gate(job.model, spec, enforce_cap=False)
    res = simulate(problem, rtol=job.rtol, atol=job.atol)
    cap = FIELD_CAPS.get(job.model.species, np.inf)
    return {
        "gate_time_s": job.gate_time,
        "detuning_GHz": job.detuning / (2 * np.pi * 1e9),
        "rotation_angle": phi,
        "fidelity": res.fidelity,
        "over_cap": bool(problem.max_field > cap),
        "leakage_pop": res.leakage,
    }


def run_detuning_map(cfg: RunConfig) -> SweepResult:
    """Fidelity and realized angle ``2 atan(sigma / Delta)`` on a (T, Delta) grid at B = 0."""
    if cfg.detunings is None or not cfg.detuning_gate_times:
        raise ValueError("detuning map needs the detuning section")
    start = time.time()
    model = cfg.model()
    jobs = [
        _DetuningJob(model, t, float(d), cfg.sigma_t0, cfg.rtol, cfg.atol)
        for t in cfg.detuning_gate_times
        for d in cfg.detunings
    ]
    records = sorted(_pool_map(_run_detuning_job, jobs, cfg.workers),
                     key=lambda r: (r["gate_time_s"], r["detuning_GHz"]))
    return SweepResult("detuning_map", DETUNING_COLUMNS, tuple(records), _metadata(cfg, start))


# --- output ------------------------------------------------------------------

def _metadata(cfg: RunConfig, start: float, **extra) -> dict:
    return {
        "config_digest": cfg.digest(),
        "config": config_summary(cfg),
        "versions": {
            "cpt_control": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": time.time() - start,
        **extra,
    }


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


def emit_results(result: SweepResult, out_dir, fmt: str = "both") -> list[Path]:
    """Write ``<kind>.csv`` and/or ``<kind>.json`` into ``out_dir``."""
    if fmt not in ("csv", "json", "both"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = []
    if fmt in ("csv", "both"):
        path = out / f"{result.kind}.csv"
        try:
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(result.columns)
                for rec in result.records:
                    w.writerow([_fmt(rec[c]) for c in result.columns])
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        paths.append(path)
    if fmt in ("json", "both"):
        path = out / f"{result.kind}.json"
        payload = {"kind": result.kind, "columns": list(result.columns),
                   "records": list(result.records), "metadata": result.metadata}
        try:
            path.write_text(json.dumps(payload, indent=2, default=_json_default))
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        paths.append(path)
    return paths


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return str(o)
