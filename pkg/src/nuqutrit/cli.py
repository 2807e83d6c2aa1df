"""Command line interface: scenario runs, calibration, and scoring.

Scenario subcommands exit 0 only when every run invariant gate passes
(probability conservation, analytic/compiled consistency, valid mitigation).
The default output directory comes from NUQUTRIT_OUT.
"""
from __future__ import annotations

import json
import math
import os
import sys

import click

from .device import (
    MockTransmon,
    calibration_report,
    device_from_json,
    heatmap_to_csv,
    silhouette_optimize,
)
from .runner import (
    config_from_dict,
    default_config,
    emit,
    load_manifest,
    read_counts_csv,
    run_scenario,
    score,
    RunResult,
)


def _common_options(fn):
    fn = click.option("--mode", default="sampled",
                      type=click.Choice(["analytic", "ideal", "sampled", "pulse"]),
                      show_default=True, help="Execution mode.")(fn)
    fn = click.option("--shots", default=None, type=int,
                      help="Shots per circuit (noisy modes).")(fn)
    fn = click.option("--repeats", default=None, type=int,
                      help="Independent repeats per circuit.")(fn)
    fn = click.option("--seed", default=None, type=int, help="Master seed.")(fn)
    fn = click.option("--config", "config_path", default=None,
                      type=click.Path(exists=True),
                      help="JSON scenario config overriding the defaults.")(fn)
    fn = click.option("--out", "out_dir", envvar="NUQUTRIT_OUT", default="runs",
                      show_default=True, help="Output directory.")(fn)
    fn = click.option("--device", "device_path", default=None,
                      type=click.Path(exists=True),
                      help="Device JSON (drives pulse mode and drift).")(fn)
    return fn


@click.group()
def main():
    """Neutrino-oscillation qutrit simulator."""


def _run(scenario: str, mode, shots, repeats, seed, config_path, out_dir,
         device_path) -> None:
    if config_path:
        with open(config_path) as fh:
            cfg = config_from_dict(json.load(fh))
    else:
        cfg = default_config(scenario, mode=mode)
    overrides = {}
    if mode is not None:
        overrides["mode"] = mode
    if shots is not None:
        overrides["shots"] = shots
    if repeats is not None:
        overrides["repeats"] = repeats
    if seed is not None:
        overrides["seed"] = seed
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    device = device_from_json(device_path) if device_path else None
    result = run_scenario(cfg, device=device)
    run_dir = os.path.join(out_dir, scenario)
    paths = emit(result, run_dir)
    report = score(result)
    with open(os.path.join(run_dir, "score.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    _print_summary(result, report)
    click.echo(f"outputs in {run_dir}")
    if not result.passed:
        click.echo("invariant gates FAILED: "
                   + ", ".join(k for k, v in result.checks.items() if not v),
                   err=True)
        sys.exit(1)


def _print_summary(result: RunResult, report) -> None:
    click.echo(f"{result.config.scenario}: {len(result.rows)} rows "
               f"in {result.elapsed_s:.2f}s, mode={result.config.mode}")
    for c in report.curves:
        r2 = "undef" if math.isnan(c.r_squared) else f"{c.r_squared:.4f}"
        click.echo(f"  init={c.init_flavor:3s} vm={c.vm:g} delta={c.delta:+.3f} "
                   f"-> {c.final_flavor:3s}  R2={r2}  "
                   f"rel_err mean={c.mean_relative_error:.3g} "
                   f"max={c.max_relative_error:.3g}")


@main.command()
@_common_options
def vacuum(mode, shots, repeats, seed, config_path, out_dir, device_path):
    """Vacuum oscillations over one full slow-phase period."""
    _run("vacuum", mode, shots, repeats, seed, config_path, out_dir, device_path)


@main.command()
@_common_options
def matter(mode, shots, repeats, seed, config_path, out_dir, device_path):
    """Oscillations with matter potentials 0, 1e-5, 1e-4, 1e-3 eV^2."""
    _run("matter", mode, shots, repeats, seed, config_path, out_dir, device_path)


@main.command()
@_common_options
def cp(mode, shots, repeats, seed, config_path, out_dir, device_path):
    """CP-violation scan over energy at the 295 km baseline."""
    _run("cp", mode, shots, repeats, seed, config_path, out_dir, device_path)


@main.command()
@click.option("--out", "out_dir", envvar="NUQUTRIT_OUT", default="runs",
              show_default=True)
@click.option("--device", "device_path", default=None, type=click.Path(exists=True))
@click.option("--shots", default=8192, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
def calibrate(out_dir, device_path, shots, seed):
    """Run the mock-device calibration stack and write the report."""
    device = device_from_json(device_path) if device_path else MockTransmon()
    run_dir = os.path.join(out_dir, "calibration")
    os.makedirs(run_dir, exist_ok=True)
    report = calibration_report(device, shots=shots, seed=seed)
    with open(os.path.join(run_dir, "calibration.json"), "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    sil = silhouette_optimize(device, seed=seed)
    heatmap_to_csv(sil, os.path.join(run_dir, "silhouette_heatmap.csv"))
    click.echo(json.dumps(
        {k: report[k] for k in ("f12_ghz", "a_pi_12", "readout_optimum",
                                "under_rotation_12", "decay_rate_khz")},
        indent=2))
    click.echo(f"outputs in {run_dir}")


@main.command(name="score")
@click.argument("run_dir", type=click.Path(exists=True))
def score_cmd(run_dir):
    """Re-score an emitted run directory against the analytic reference."""
    manifest = load_manifest(os.path.join(run_dir, "manifest.json"))
    config = config_from_dict(manifest["config"])
    rows = read_counts_csv(os.path.join(run_dir, "counts.csv"))
    result = RunResult(config=config, rows=rows, checks=manifest.get("checks", {}))
    report = score(result)
    _print_summary(result, report)
    with open(os.path.join(run_dir, "score.json"), "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
