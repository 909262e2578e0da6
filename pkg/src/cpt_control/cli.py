"""Command line front end: ``cpt-sweep <subcommand> --config run.yaml``."""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, load_config
from .dynamics import StepSizeFailure
from .magnus import RankDeficient
from .protocols import FieldCapExceeded, evaluate_protocol

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
NUMERIC_ERRORS = (StepSizeFailure, RankDeficient, ArithmeticError, np.linalg.LinAlgError,
                  FieldCapExceeded)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except NUMERIC_ERRORS as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)

    return wrapper


def _common(fn):
    fn = click.option("--format", "fmt", type=click.Choice(["csv", "json", "both"]),
                      default=None, help="Output format (default from config).")(fn)
    fn = click.option("--workers", type=click.IntRange(min=1), default=None,
                      help="Worker processes (default from config).")(fn)
    fn = click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                      help="Output directory (default from config).")(fn)
    fn = click.option("--config", "config", type=click.Path(dir_okay=False), required=True,
                      help="YAML run configuration.")(fn)
    return fn


def _load(config, workers, out, fmt):
    cfg = load_config(config)
    from dataclasses import replace
    updates = {}
    if workers is not None:
        updates["workers"] = workers
    if out is not None:
        updates["out_dir"] = out
    if fmt is not None:
        updates["out_format"] = fmt
    return replace(cfg, **updates)


def _emit(result, cfg):
    from .sweeps import emit_results
    for p in emit_results(result, cfg.out_dir, cfg.out_format):
        click.echo(str(p))


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Optical CPT gates on group-IV color centers: scans, sweeps and corrections."""


@main.command("validate-config")
@click.option("--config", "config", type=click.Path(dir_okay=False), required=True)
@_guarded
def validate_config(config):
    """Parse a configuration and report problems."""
    cfg = load_config(config)
    click.echo(f"ok: {cfg.species}, digest {cfg.digest()}")


@main.command("protocol-scan")
@_common
@_guarded
def protocol_scan(config, out, workers, fmt):
    """Optimal gate time and infidelity per protocol and rotation angle."""
    from .sweeps import run_protocol_scan
    cfg = _load(config, workers, out, fmt)
    _emit(run_protocol_scan(cfg), cfg)


@main.command("field-sweep")
@_common
@_guarded
def field_sweep(config, out, workers, fmt):
    """Fidelity and gate time over a (B_par, B_perp) grid."""
    from .sweeps import run_field_sweep
    cfg = _load(config, workers, out, fmt)
    if cfg.b_par is None:
        raise ConfigError("field section is required for field-sweep", "field")
    _emit(run_field_sweep(cfg), cfg)


@main.command("detuning-map")
@_common
@_guarded
def detuning_map(config, out, workers, fmt):
    """Fidelity and realized angle versus gate time and two-photon detuning."""
    from .sweeps import run_detuning_map
    cfg = _load(config, workers, out, fmt)
    if cfg.detunings is None:
        raise ConfigError("detuning section is required for detuning-map", "detuning")
    _emit(run_detuning_map(cfg), cfg)


@main.command("correct")
@_common
@click.option("--gate-time-ps", type=float, required=True, help="Gate duration in ps.")
@click.option("--protocol", type=click.Choice(["magnus", "drag"]), default="magnus")
@click.option("--samples", type=click.IntRange(min=2), default=501)
@_guarded
def correct(config, out, workers, fmt, gate_time_ps, protocol, samples):
    """Write sampled correction envelopes (t, in-phase, quadrature) per laser."""
    from . import drag, magnus
    from .protocols import build_gate, _base_protocol
    from .pulses import design_cpt_gate

    cfg = _load(config, workers, out, fmt)
    model = cfg.model()
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    T = gate_time_ps * 1e-12
    for phi in cfg.angles:
        best = evaluate_protocol(model, phi, T, protocol, sigma_t0=cfg.sigma_t0,
                                 options=cfg.corrections, enforce_cap=not cfg.allow_over_cap,
                                 rtol=cfg.rtol, atol=cfg.atol)
        spec = design_cpt_gate(phi, gate_time=T, sigma_t0=cfg.sigma_t0)
        problem = build_gate(model, spec, None, _base_protocol(protocol), enforce_cap=False)
        if protocol == "magnus":
            system = magnus.assemble_magnus_system(problem, best.setting["k_max"])
            env = magnus.solve_magnus(system, strict=not best.setting.get("resonant", False))
            envs = (env, None)
        else:
            envs = drag.drag_envelopes(problem, best.setting["rescale"],
                                       cfg.corrections.cross_is_lambda12)
        tag = f"{protocol}_phi{phi / np.pi:+.4f}pi"
        for laser, env in enumerate(envs):
            if env is None:
                continue
            path = out_dir / f"{tag}_laser{laser + 1}.csv"
            env.to_csv(path, samples)
            click.echo(str(path))
        click.echo(f"{tag}: fidelity {best.fidelity:.6f}, setting {best.setting}")


if __name__ == "__main__":
    main()
