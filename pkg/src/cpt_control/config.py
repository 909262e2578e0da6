"""Run configuration: a strict YAML schema with units converted at load time.

I/O units are GHz, ps, T, V/m and W; rotation angles are given in units of
pi. Unknown keys are errors and every diagnostic names the field path and,
when available, the line it came from.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .defect import GHZ, TILT_DEFAULT, TWO_PI, DefectModel, MagneticField, model_for
from .protocols import PROTOCOLS, CorrectionOptions, LambdaChoice, default_lambda
from .pulses import FIELD_CAPS, SIGMA_T0_DEFAULT, power_to_field

PS = 1e-12


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = "", line: int | None = None):
        where = path or "<root>"
        if line is not None:
            where += f" (line {line})"
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


# key -> (type, required); nested sections are dicts of the same form
_RANGE = {"min": (float, True), "max": (float, True), "points": (int, True)}
SCHEMA = {
    "species": (str, True),
    "seed": (int, False),
    "workers": (int, False),
    "protocols": (list, False),
    "angles_pi": (list, False),
    "sigma_t0": (float, False),
    "allow_over_cap": (bool, False),
    "model": ({
        "theta_g": (float, False), "theta_e": (float, False),
        "phi_g": (float, False), "phi_e": (float, False),
        "temperature_K": (float, False), "delta_gs_GHz": (float, False),
        "delta_es_GHz": (float, False), "dipole_scale": (float, False),
    }, False),
    "gate_time": ({
        "min_ps": (float, True), "max_ps": (float, True), "points": (int, True),
        "refine": (int, False), "stop_margin": (float, False),
    }, False),
    "field": ({
        "b_par_T": (_RANGE, True), "b_perp_T": (_RANGE, True),
        "tilt_deg": (float, False), "legs": (list, False), "plane": (str, False),
    }, False),
    "laser": ({
        "field_V_per_m": (float, False), "power_W": (float, False),
        "wavelength_nm": (float, False), "na": (float, False),
    }, False),
    "detuning": ({
        "min_GHz": (float, True), "max_GHz": (float, True), "points": (int, True),
        "gate_times_ps": (list, True),
    }, False),
    "magnus": ({"k_max": (list, False), "resonant_modes": (bool, False)}, False),
    "drag": ({"rescale": (_RANGE, False), "cross_is_lambda12": (bool, False)}, False),
    "integrator": ({"rtol": (float, False), "atol": (float, False)}, False),
    "output": ({"dir": (str, False), "format": (str, False)}, False),
}


def _line_map(text: str) -> dict:
    """Map dotted key paths to 1-based source lines."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                out[path] = k.start_mark.line + 1
                walk(v, path)

    if root is not None:
        walk(root, "")
    return out


def _check(data, schema, prefix, lines):
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", prefix, lines.get(prefix))
    for key in data:
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in schema:
            raise ConfigError("unknown key", path, lines.get(path))
    for key, (kind, required) in schema.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in data:
            if required:
                raise ConfigError("missing required key", path, lines.get(prefix))
            continue
        val = data[key]
        if isinstance(kind, dict):
            _check(val, kind, path, lines)
        elif kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"expected a number, got {val!r}", path, lines.get(path))
        elif kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"expected an integer, got {val!r}", path, lines.get(path))
        elif not isinstance(val, kind):
            raise ConfigError(f"expected {kind.__name__}, got {val!r}", path, lines.get(path))


@dataclass(frozen=True)
class Grid:
    min: float
    max: float
    points: int

    def values(self) -> np.ndarray:
        return np.linspace(self.min, self.max, self.points)


@dataclass(frozen=True)
class RunConfig:
    species: str
    protocols: tuple[str, ...] = ("naive", "orthogonal", "magnus", "drag")
    angles: tuple[float, ...] = (np.pi,)  # rad
    sigma_t0: float = SIGMA_T0_DEFAULT
    model_overrides: dict = field(default_factory=dict)
    gate_time_min: float = 10 * PS
    gate_time_max: float = 10_000 * PS
    gate_time_points: int = 40
    gate_time_refine: int = 8
    stop_margin: float = 0.02
    b_par: Grid | None = None
    b_perp: Grid | None = None
    tilt: float = TILT_DEFAULT
    legs: tuple[str, str] | None = None
    plane: str | None = None
    laser_field: float | None = None  # V/m
    detunings: np.ndarray | None = field(default=None, compare=False)
    detuning_gate_times: tuple[float, ...] = ()
    corrections: CorrectionOptions = CorrectionOptions()
    rtol: float = 1e-8
    atol: float = 1e-10
    allow_over_cap: bool = False
    workers: int = 1
    seed: int = 0
    out_dir: str = "results"
    out_format: str = "both"
    source: dict = field(default_factory=dict, compare=False, repr=False)

    def model(self) -> DefectModel:
        return model_for(self.species, **self.model_overrides)

    def gate_times(self) -> np.ndarray:
        return np.geomspace(self.gate_time_min, self.gate_time_max, self.gate_time_points)

    def lambda_choice(self, field_on: bool) -> LambdaChoice:
        base = default_lambda(self.species, field_on)
        if not field_on:
            return base
        legs = tuple(self.legs) if self.legs is not None else base.legs
        leak = tuple("C" + leg[1:] for leg in legs)
        return LambdaChoice(legs, self.plane or base.plane, leak)

    def field_points(self) -> list[MagneticField]:
        if self.b_par is None or self.b_perp is None:
            return [MagneticField(tilt=self.tilt)]
        return [
            MagneticField(float(bp), float(bq), self.tilt)
            for bq in self.b_perp.values()
            for bp in self.b_par.values()
        ]

    def digest(self) -> str:
        blob = json.dumps(self.source, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_MODEL_KEYS = {
    "theta_g": ("theta_g", 1.0), "theta_e": ("theta_e", 1.0),
    "phi_g": ("phi_g", 1.0), "phi_e": ("phi_e", 1.0),
    "temperature_K": ("temperature", 1.0), "dipole_scale": ("dipole_scale", 1.0),
    "delta_gs_GHz": ("delta_gs", TWO_PI * GHZ), "delta_es_GHz": ("delta_es", TWO_PI * GHZ),
}


def _grid(d: dict, path: str, lines: dict) -> Grid:
    g = Grid(float(d["min"]), float(d["max"]), int(d["points"]))
    if g.points < 1:
        raise ConfigError("grid must have at least one point", path, lines.get(path))
    if g.max < g.min:
        raise ConfigError("grid max is below min", path, lines.get(path))
    return g


def parse_config(data: dict, text: str = "") -> RunConfig:
    lines = _line_map(text) if text else {}
    if data is None:
        raise ConfigError("empty configuration")
    _check(data, SCHEMA, "", lines)
    species = data["species"]
    if species not in FIELD_CAPS:
        raise ConfigError(f"unknown species {species!r}", "species", lines.get("species"))
    kw: dict = {"species": species, "source": data}

    if "protocols" in data:
        protos = tuple(data["protocols"])
        bad = [p for p in protos if p not in PROTOCOLS]
        if bad or not protos:
            raise ConfigError(f"protocols must be a non-empty subset of {PROTOCOLS}",
                              "protocols", lines.get("protocols"))
        kw["protocols"] = protos
    if "angles_pi" in data:
        angles = data["angles_pi"]
        if not angles:
            raise ConfigError("angle list is empty", "angles_pi", lines.get("angles_pi"))
        if any(isinstance(a, bool) or not isinstance(a, (int, float)) or a == 0 or abs(a) >= 2
               for a in angles):
            raise ConfigError("angles must be nonzero numbers in (-2, 2)", "angles_pi",
                              lines.get("angles_pi"))
        kw["angles"] = tuple(float(a) * np.pi for a in angles)
    for key in ("seed", "workers"):
        if key in data:
            if data[key] < (1 if key == "workers" else 0):
                raise ConfigError("out of range", key, lines.get(key))
            kw[key] = int(data[key])
    if "sigma_t0" in data:
        if data["sigma_t0"] <= 0:
            raise ConfigError("must be positive", "sigma_t0", lines.get("sigma_t0"))
        kw["sigma_t0"] = float(data["sigma_t0"])
    kw["allow_over_cap"] = bool(data.get("allow_over_cap", False))

    model = data.get("model", {})
    kw["model_overrides"] = {
        _MODEL_KEYS[k][0]: float(v) * _MODEL_KEYS[k][1] for k, v in model.items()
    }

    gt = data.get("gate_time")
    if gt is not None:
        if not 0 < gt["min_ps"] <= gt["max_ps"] or gt["points"] < 1:
            raise ConfigError("need 0 < min_ps <= max_ps and points >= 1", "gate_time",
                              lines.get("gate_time"))
        kw.update(gate_time_min=gt["min_ps"] * PS, gate_time_max=gt["max_ps"] * PS,
                  gate_time_points=gt["points"], gate_time_refine=int(gt.get("refine", 8)),
                  stop_margin=float(gt.get("stop_margin", 0.02)))

    fld = data.get("field")
    if fld is not None:
        kw["b_par"] = _grid(fld["b_par_T"], "field.b_par_T", lines)
        kw["b_perp"] = _grid(fld["b_perp_T"], "field.b_perp_T", lines)
        kw["tilt"] = np.deg2rad(fld.get("tilt_deg", np.rad2deg(TILT_DEFAULT)))
        if "legs" in fld:
            legs = tuple(fld["legs"])
            if len(legs) != 2 or any(not (isinstance(x, str) and len(x) == 2 and x[0] in "ABCD"
                                          and x[1] in "1234") for x in legs):
                raise ConfigError("legs must be two transition labels like A1",
                                  "field.legs", lines.get("field.legs"))
            kw["legs"] = legs
        if "plane" in fld:
            if fld["plane"] not in ("xy", "xz", "yz", "auto"):
                raise ConfigError("plane must be xy, xz, yz or auto", "field.plane",
                                  lines.get("field.plane"))
            kw["plane"] = fld["plane"]

    laser = data.get("laser")
    if laser is not None:
        if ("field_V_per_m" in laser) == ("power_W" in laser):
            raise ConfigError("give exactly one of field_V_per_m or power_W", "laser",
                              lines.get("laser"))
        if "field_V_per_m" in laser:
            e0 = float(laser["field_V_per_m"])
        else:
            wl = float(laser.get("wavelength_nm", 737.0)) * 1e-9
            e0 = power_to_field(float(laser["power_W"]), wl, float(laser.get("na", 0.9)))
        if e0 <= 0:
            raise ConfigError("laser field must be positive", "laser", lines.get("laser"))
        if e0 > FIELD_CAPS[species] and not kw["allow_over_cap"]:
            raise ConfigError(
                f"field {e0:.3e} V/m exceeds the {species} cap {FIELD_CAPS[species]:.3e} V/m "
                "(set allow_over_cap to override)", "laser", lines.get("laser"))
        kw["laser_field"] = e0

    det = data.get("detuning")
    if det is not None:
        g = _grid({"min": det["min_GHz"], "max": det["max_GHz"], "points": det["points"]},
                  "detuning", lines)
        times = det["gate_times_ps"]
        if not times or any(isinstance(x, bool) or not isinstance(x, (int, float)) or x <= 0
                            for x in times):
            raise ConfigError("gate_times_ps must be a non-empty list of positive numbers",
                              "detuning.gate_times_ps", lines.get("detuning.gate_times_ps"))
        kw["detunings"] = g.values() * TWO_PI * GHZ
        kw["detuning_gate_times"] = tuple(float(x) * PS for x in times)

    opts = {}
    mg = data.get("magnus", {})
    if "k_max" in mg:
        ks = mg["k_max"]
        if not ks or any(isinstance(k, bool) or not isinstance(k, int) or k < 1 for k in ks):
            raise ConfigError("k_max must list positive integers", "magnus.k_max",
                              lines.get("magnus.k_max"))
        opts["k_max_values"] = tuple(ks)
    if "resonant_modes" in mg:
        opts["resonant_modes"] = bool(mg["resonant_modes"])
    dg = data.get("drag", {})
    if "rescale" in dg:
        g = _grid(dg["rescale"], "drag.rescale", lines)
        if max(abs(g.min), abs(g.max)) >= 4:
            raise ConfigError("rescale factors must satisfy |c| < 4", "drag.rescale",
                              lines.get("drag.rescale"))
        opts["rescale_grid"] = tuple(np.round(g.values(), 12))
    if "cross_is_lambda12" in dg:
        opts["cross_is_lambda12"] = bool(dg["cross_is_lambda12"])
    kw["corrections"] = CorrectionOptions(**opts)

    integ = data.get("integrator", {})
    for key in ("rtol", "atol"):
        if key in integ:
            if integ[key] <= 0:
                raise ConfigError("must be positive", f"integrator.{key}",
                                  lines.get(f"integrator.{key}"))
            kw[key] = float(integ[key])
    out = data.get("output", {})
    if "dir" in out:
        kw["out_dir"] = out["dir"]
    if "format" in out:
        if out["format"] not in ("csv", "json", "both"):
            raise ConfigError("format must be csv, json or both", "output.format",
                              lines.get("output.format"))
        kw["out_format"] = out["format"]
    return RunConfig(**kw)


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``8e4`` and ``1.0e-8`` as floats (YAML 1.2 style)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {exc}", line=mark.line + 1 if mark else None) from exc
    return parse_config(data, text)


def config_summary(cfg: RunConfig) -> dict:
    """JSON-safe view of the parsed configuration."""
    d = asdict(cfg)
    d.pop("source", None)
    return json.loads(json.dumps(d, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o)))
