"""Scenario execution: dispatch a validated config to the library and write
trajectory CSV, spectrum CSV, report JSON and figures.

The runner computes nothing itself: every number in the report is the
untouched result of a library call, serialized at 12 significant digits
(which makes repeated runs with the same config and seed byte-identical).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_PULSE_WAIT_T1E, ScenarioConfig
from .core import (
    boltzmann_factor,
    build_levels,
    populations_with_polarization,
    thermal_populations,
)
from .errors import ConfigRangeError
from .kinetics import (
    DriveSpec,
    build_rate_matrix,
    evolve,
    ponsee_pulse_cycle,
    run_schedule,
    steady_state,
)
from .observables import (
    electronic_polarization,
    enhancement,
    nuclear_polarization,
    ponsee_cw_prediction,
    thermal_nuclear_baseline,
)
from .spectrum import params_hash, spectrum_csv_text, synthesize_spectrum

TRAJECTORY_SAMPLES = 200  # sampling resolution of continuously driven scenarios


def round12(value):
    """Round floats (recursively through containers) to 12 significant digits."""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(format(float(value), ".12g"))
    if isinstance(value, dict):
        return {k: round12(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [round12(v) for v in value]
    return value


def _g12(x) -> str:
    return format(float(x), ".12g")


@dataclass
class RunResult:
    report: dict
    final_populations: np.ndarray
    times: np.ndarray
    populations: np.ndarray  # trajectory, shape (n, 8)
    out_dir: str


def _sampled_evolution(model, p0, duration, samples=TRAJECTORY_SAMPLES):
    times = np.linspace(0.0, duration, samples + 1)
    pops = [p0]
    for k in range(samples):
        pops.append(evolve(model, pops[-1], times[k + 1] - times[k]))
    return times, np.array(pops)


def _simulate(cfg: ScenarioConfig, seed: int):
    """Run the configured scenario; returns times, populations, extras."""
    params = cfg.system
    levels = build_levels(params)
    rates = cfg.rates.build(params)
    sc = cfg.scenario
    duration = sc.resolved_duration()
    extras: dict = {}

    if sc.kind == "thermal":
        p0 = thermal_populations(levels, params.temperature)
        times = np.array([0.0])
        pops = np.array([p0])
    elif sc.kind in ("overhauser", "ponsee_cw"):
        strength = sc.drive_factor * max(rates.max_rate(), 1e-30)
        drives = [DriveSpec(sc.mw, strength)]
        if sc.kind == "ponsee_cw":
            drives.append(DriveSpec(sc.rf, strength))
        model = build_rate_matrix(params, rates, drives)
        p0 = thermal_populations(levels, params.temperature)
        if duration <= 0:
            raise ConfigRangeError(f"scenario.duration_s must be > 0 for {sc.kind}")
        times, pops = _sampled_evolution(model, p0, duration)
        extras["steady_state_nuclear_polarization"] = nuclear_polarization(
            steady_state(model), levels
        )
        if sc.kind == "ponsee_cw":
            extras["closed_form_nuclear_polarization"] = ponsee_cw_prediction(
                boltzmann_factor(params), sc.rf
            )
    elif sc.kind == "ponsee_pulsed":
        p0 = thermal_populations(levels, params.temperature)
        wait = DEFAULT_PULSE_WAIT_T1E * cfg.rates.t1e_seconds
        steps = []
        for _ in range(sc.cycles):
            steps.extend(ponsee_pulse_cycle(sc.mw, sc.rf, wait))
        traj = run_schedule(params, rates, steps, p0, drive_factor=sc.drive_factor)
        times = np.array([t for t, _ in traj])
        pops = np.array([p for _, p in traj])
        extras["closed_form_nuclear_polarization"] = ponsee_cw_prediction(
            boltzmann_factor(params), sc.rf
        )
    elif sc.kind == "relax":
        p0 = populations_with_polarization(levels, params.temperature, sc.initial_polarization)
        model = build_rate_matrix(params, rates, ())
        if duration <= 0:
            raise ConfigRangeError("scenario.duration_s must be > 0 for relax")
        times, pops = _sampled_evolution(model, p0, duration)
    else:  # pragma: no cover - config validation rejects unknown kinds
        raise ConfigRangeError(f"unknown scenario kind {sc.kind!r}")

    spec = synthesize_spectrum(
        pops[-1],
        params,
        levels,
        linewidth=cfg.spectrum.linewidth_tesla,
        n_points=cfg.spectrum.n_points,
        span=cfg.spectrum.span_tesla,
        noise_rms=cfg.spectrum.noise_rms,
        seed=seed,
    )
    return levels, times, pops, spec, extras


def trajectory_csv_text(cfg: ScenarioConfig, levels, times, pops) -> str:
    rows = ["# scenario = " + cfg.scenario.kind]
    rows.append("# params_hash = " + params_hash(cfg.system))
    rows.append("time_s," + ",".join(f"p{k}" for k in range(8)) + ",nuclear_p")
    for t, p in zip(times, pops):
        pol = nuclear_polarization(p, levels)
        rows.append(",".join([_g12(t)] + [_g12(v) for v in p] + [_g12(pol)]))
    return "\n".join(rows) + "\n"


def _sha256(path) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def run_scenario(cfg: ScenarioConfig, out_dir: str | None = None, seed: int | None = None) -> RunResult:
    """Execute the scenario and write its artifacts.

    ``out_dir`` and ``seed`` override the config's output directory and
    spectrum seed (the CLI maps --out-dir/--seed here). Rerunning with an
    identical config and seed reproduces every output byte-for-byte.
    """
    out = out_dir if out_dir is not None else cfg.output.directory
    use_seed = cfg.spectrum.seed if seed is None else seed
    os.makedirs(out, exist_ok=True)

    levels, times, pops, spec, extras = _simulate(cfg, use_seed)
    params = cfg.system
    p_final = pops[-1]
    baseline = thermal_nuclear_baseline(params)
    nuc = nuclear_polarization(p_final, levels)
    ele = electronic_polarization(p_final, levels)

    written: dict[str, str] = {}
    if "csv" in cfg.output.formats:
        traj_path = os.path.join(out, "trajectory.csv")
        with open(traj_path, "w", encoding="utf-8") as f:
            f.write(trajectory_csv_text(cfg, levels, times, pops))
        written["trajectory.csv"] = _sha256(traj_path)
        spec_path = os.path.join(out, "spectrum.csv")
        with open(spec_path, "w", encoding="utf-8") as f:
            f.write(spectrum_csv_text(spec))
        written["spectrum.csv"] = _sha256(spec_path)
    if cfg.output.figures:
        from .plotting import save_figure, spectrum_figure, trajectory_figure

        pols = [nuclear_polarization(p, levels) for p in pops]
        fig_t = trajectory_figure(times, pops, pols)
        t_path = os.path.join(out, "trajectory.png")
        save_figure(fig_t, t_path)
        written["trajectory.png"] = _sha256(t_path)
        fig_s = spectrum_figure(spec)
        s_path = os.path.join(out, "spectrum.png")
        save_figure(fig_s, s_path)
        written["spectrum.png"] = _sha256(s_path)

    report = {
        "scenario": round12(cfg.echo()),
        "seed": use_seed,
        "elapsed_simulated_s": round12(float(times[-1])),
        "final_populations": round12(p_final),
        "nuclear_polarization": round12(nuc),
        "electronic_polarization": round12(ele),
        "baseline_polarization_magnitude": round12(baseline),
    }
    if cfg.scenario.kind != "thermal":
        report["enhancement_vs_baseline"] = round12(enhancement(nuc, baseline))
    for key, val in extras.items():
        report[key] = round12(val)
    report["files"] = written

    if "json" in cfg.output.formats:
        report_path = os.path.join(out, "report.json")
        with open(report_path, "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=False)
            f.write("\n")

    return RunResult(
        report=report,
        final_populations=p_final,
        times=times,
        populations=pops,
        out_dir=out,
    )
