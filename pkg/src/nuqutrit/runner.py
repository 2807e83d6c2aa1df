"""Scenario runner: oscillation curves across execution modes, scoring, and emission.

A scenario run sweeps a baseline axis and records, for every grid point,
initial flavor and parameter variant (matter potential or CP phase), the
three final-flavor probabilities in one of four modes:

    analytic  closed-form probabilities
    ideal     compiled gate sequence on the noiseless statevector machine
    sampled   ideal probabilities + readout confusion + multinomial shots +
              per-job inverse-confusion mitigation
    pulse     gate sequences executed at pulse level on the mock transmon,
              then the sampled-mode noise pipeline

Noisy modes mirror the hardware job structure: 300 circuits per job, the
first 3 preparing the basis states to estimate the job's confusion matrix,
leaving 297 sweep circuits.  Every random draw is seeded from
(master seed, curve, chunk, repeat, circuit) so parallel and serial runs,
and replays from a saved manifest, are byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .decomposition import decompose, insert_evolution
from .device import MockTransmon, job_confusion, prep_gates, run_sequence_pulsed
from .pmns import (
    NUFIT_PARAMS,
    RAD_PER_EV2_KM_PER_GEV,
    Baseline,
    OscillationParams,
    effective_params,
    evolution_phases,
    oscillation_probabilities,
)
from .vm import (
    DEFAULT_CONFUSION,
    apply_sequence,
    confuse_distribution,
    mitigate,
    sample_counts,
)

MODES = ("analytic", "ideal", "sampled", "pulse")
CIRCUITS_PER_JOB = 300
CALIBRATION_CIRCUITS = 3
POINTS_PER_JOB = CIRCUITS_PER_JOB - CALIBRATION_CIRCUITS


def full_phase_period_l_over_e(params: OscillationParams = NUFIT_PARAMS) -> float:
    """L/E spanning one full period of the slow (2-1 splitting) phase."""
    return 2.0 * math.pi / (RAD_PER_EV2_KM_PER_GEV * params.dm2_21)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    sweep: str                       # "l_over_e" | "energy"
    grid_min: float
    grid_max: float
    grid_points: int = POINTS_PER_JOB
    fixed_energy_gev: float = 1.0    # metadata for l_over_e sweeps
    fixed_length_km: float = 295.0   # baseline for energy sweeps
    init_flavors: tuple = ("mu",)
    vm_list: tuple = (0.0,)
    delta_list: tuple = (0.0,)
    mode: str = "sampled"
    shots: int = 8192
    repeats: int = 4
    seed: int = 20220301
    params: OscillationParams = NUFIT_PARAMS

    def __post_init__(self):
        if self.scenario not in ("vacuum", "matter", "cp"):
            raise ValueError("scenario must be vacuum, matter or cp")
        if self.sweep not in ("l_over_e", "energy"):
            raise ValueError("sweep must be l_over_e or energy")
        if self.grid_points < 2:
            raise ValueError("need at least 2 grid points")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def grid(self) -> np.ndarray:
        return np.linspace(self.grid_min, self.grid_max, self.grid_points)

    def baseline(self, x: float) -> Baseline:
        if self.sweep == "l_over_e":
            return Baseline(l_over_e=float(x))
        return Baseline(length_km=self.fixed_length_km, energy_gev=float(x))

    def curves(self) -> list:
        """(init_flavor, vm, delta) combinations enumerated in stable order."""
        out = []
        for init in self.init_flavors:
            for vmv in self.vm_list:
                for dlt in self.delta_list:
                    out.append((init, float(vmv), float(dlt)))
        return out


def default_config(scenario: str, mode: str = "sampled",
                   params: OscillationParams = NUFIT_PARAMS,
                   **overrides) -> ScenarioConfig:
    """Reference sweep configurations for the three scenarios."""
    if scenario == "vacuum":
        cfg = ScenarioConfig(
            scenario="vacuum", sweep="l_over_e",
            grid_min=0.0, grid_max=full_phase_period_l_over_e(params),
            init_flavors=("e", "mu", "tau"), mode=mode, params=params,
        )
    elif scenario == "matter":
        cfg = ScenarioConfig(
            scenario="matter", sweep="l_over_e",
            grid_min=0.0, grid_max=full_phase_period_l_over_e(params),
            init_flavors=("mu",), vm_list=(0.0, 1e-5, 1e-4, 1e-3),
            mode=mode, params=params,
        )
    elif scenario == "cp":
        cfg = ScenarioConfig(
            scenario="cp", sweep="energy", grid_min=0.1, grid_max=2.0,
            fixed_length_km=295.0, init_flavors=("mu",),
            delta_list=(-math.pi / 2, 0.0, math.pi / 2, math.pi),
            mode=mode, shots=4096, params=params,
        )
    else:
        raise ValueError(f"unknown scenario {scenario!r}")
    return replace(cfg, **overrides) if overrides else cfg


@dataclass(frozen=True)
class RunRow:
    scenario: str
    sweep_value: float
    init_flavor: str
    vm: float
    delta: float
    repeat: int
    n0: int
    n1: int
    n2: int
    shots: int
    seed: int
    p0: float
    p1: float
    p2: float


CSV_COLUMNS = ("scenario", "L_over_E_or_E", "init_flavor", "n0", "n1", "n2",
               "shots", "seed", "mitigated_p0", "mitigated_p1", "mitigated_p2",
               "vm", "delta", "repeat")


@dataclass
class RunResult:
    config: ScenarioConfig
    rows: list
    checks: dict = field(default_factory=dict)
    elapsed_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def curve_mean(self, init: str, vmv: float, dlt: float) -> np.ndarray:
        """(grid_points, 3) probabilities averaged over repeats."""
        rows = [r for r in self.rows
                if r.init_flavor == init and r.vm == vmv and r.delta == dlt]
        xs = sorted({r.sweep_value for r in rows})
        out = np.zeros((len(xs), 3))
        for k, x in enumerate(xs):
            sel = [r for r in rows if r.sweep_value == x]
            out[k] = np.mean([[r.p0, r.p1, r.p2] for r in sel], axis=0)
        return out


def _point_seed(master: int, curve: int, chunk: int, repeat: int, circuit: int):
    return np.random.default_rng(
        np.random.SeedSequence([int(master), curve, chunk, repeat, circuit])
    )


def analytic_reference(config: ScenarioConfig, init: str, vmv: float,
                       dlt: float) -> np.ndarray:
    """(grid_points, 3) closed-form probabilities for one curve."""
    params = config.params.with_delta(dlt)
    out = np.empty((config.grid_points, 3))
    for i, x in enumerate(config.grid()):
        out[i] = oscillation_probabilities(params, init, config.baseline(x), vmv)
    return out


def _compiled_probabilities(config: ScenarioConfig, init: str, vmv: float,
                            dlt: float, device: MockTransmon | None,
                            pulse: bool) -> np.ndarray:
    params = config.params.with_delta(dlt)
    scenario = config.scenario
    r, rdag = decompose(params, scenario, vmv)
    eff = effective_params(params, vmv) if scenario == "matter" else params
    out = np.empty((config.grid_points, 3))
    for i, x in enumerate(config.grid()):
        phi01, phi12 = evolution_phases(eff, config.baseline(x))
        seq = insert_evolution(r, rdag, phi01, phi12, scenario)
        if pulse:
            out[i] = run_sequence_pulsed(device, seq, initial=init)
        else:
            out[i] = np.abs(apply_sequence(init, seq)) ** 2
    return out


def _estimate_confusion(a_true: np.ndarray, shots: int, rngs, pulse: bool,
                        device: MockTransmon | None) -> np.ndarray:
    """Per-job calibration: three state-preparation circuits, one per level."""
    a_hat = np.empty((3, 3))
    for j in range(3):
        if pulse:
            seq_gates = prep_gates(j)
            from .decomposition import GateSequence
            p = run_sequence_pulsed(device, GateSequence(seq_gates), initial=0)
        else:
            p = np.zeros(3)
            p[j] = 1.0
        noisy = confuse_distribution(p, a_true)
        counts = sample_counts(noisy, shots, rngs[j])
        a_hat[:, j] = counts.frequencies
    return a_hat


def run_scenario(config: ScenarioConfig,
                 device: MockTransmon | None = None) -> RunResult:
    """Execute one scenario configuration; see the module docstring."""
    t0 = time.perf_counter()
    mode = config.mode
    pulse = mode == "pulse"
    if pulse and device is None:
        device = MockTransmon()
    grid = config.grid()
    rows: list = []
    checks = {"probability_conservation": True, "mode_consistency": True,
              "mitigation_valid": True}
    for curve_idx, (init, vmv, dlt) in enumerate(config.curves()):
        reference = analytic_reference(config, init, vmv, dlt)
        conserved = np.abs(reference.sum(axis=1) - 1.0).max() < 1e-12
        checks["probability_conservation"] &= bool(conserved)
        if mode == "analytic":
            probs = reference
        else:
            probs = _compiled_probabilities(config, init, vmv, dlt, device, pulse)
            tol = 5e-3 if pulse else 1e-9
            checks["mode_consistency"] &= bool(np.abs(probs - reference).max() < tol)
        if mode in ("analytic", "ideal"):
            for i, x in enumerate(grid):
                rows.append(RunRow(
                    scenario=config.scenario, sweep_value=float(x),
                    init_flavor=init, vm=vmv, delta=dlt, repeat=0,
                    n0=0, n1=0, n2=0, shots=0, seed=config.seed,
                    p0=float(probs[i, 0]), p1=float(probs[i, 1]), p2=float(probs[i, 2]),
                ))
            continue
        # noisy modes: job chunking with per-job calibration
        for chunk_idx in range(0, config.grid_points, POINTS_PER_JOB):
            chunk = range(chunk_idx, min(chunk_idx + POINTS_PER_JOB, config.grid_points))
            for rep in range(config.repeats):
                cal_rngs = [_point_seed(config.seed, curve_idx, chunk_idx, rep, c)
                            for c in range(CALIBRATION_CIRCUITS)]
                drift_rng = _point_seed(config.seed, curve_idx, chunk_idx, rep, 999_999)
                if device is not None:
                    a_true = job_confusion(device, drift_rng)
                else:
                    a_true = DEFAULT_CONFUSION
                a_hat = _estimate_confusion(a_true, config.shots, cal_rngs,
                                            pulse, device)
                for i in chunk:
                    rng = _point_seed(config.seed, curve_idx, chunk_idx, rep,
                                      CALIBRATION_CIRCUITS + (i - chunk_idx))
                    noisy = confuse_distribution(probs[i], a_true)
                    counts = sample_counts(noisy, config.shots, rng)
                    m = mitigate(counts.frequencies, a_hat)
                    if not np.isfinite(m.probs).all():
                        checks["mitigation_valid"] = False
                    rows.append(RunRow(
                        scenario=config.scenario, sweep_value=float(grid[i]),
                        init_flavor=init, vm=vmv, delta=dlt, repeat=rep,
                        n0=counts.n0, n1=counts.n1, n2=counts.n2,
                        shots=config.shots, seed=config.seed,
                        p0=float(m.probs[0]), p1=float(m.probs[1]), p2=float(m.probs[2]),
                    ))
    return RunResult(config=config, rows=rows, checks=checks,
                     elapsed_s=time.perf_counter() - t0)


# --- scoring ----------------------------------------------------------------

R2_UNDEFINED = float("nan")


@dataclass(frozen=True)
class CurveScore:
    init_flavor: str
    vm: float
    delta: float
    final_flavor: str
    r_squared: float
    mean_relative_error: float
    max_relative_error: float
    n_points: int


@dataclass
class ScoreReport:
    curves: list
    shots: int
    repeats: int

    def min_r_squared(self) -> float:
        vals = [c.r_squared for c in self.curves if not math.isnan(c.r_squared)]
        return min(vals) if vals else R2_UNDEFINED

    def to_dict(self) -> dict:
        return {
            "shots": self.shots,
            "repeats": self.repeats,
            "min_r_squared": self.min_r_squared(),
            "curves": [asdict(c) for c in self.curves],
        }


def r_squared(measured: np.ndarray, reference: np.ndarray) -> float:
    """1 - sum((y - y0)^2) / sum((y - ybar)^2) with ybar the measured mean.

    Degenerate (zero-variance) measured curves return NaN as the documented
    sentinel.
    """
    y = np.asarray(measured, dtype=float)
    y0 = np.asarray(reference, dtype=float)
    denom = float(np.sum((y - y.mean()) ** 2))
    if denom == 0.0:
        return R2_UNDEFINED
    return 1.0 - float(np.sum((y - y0) ** 2)) / denom


def relative_errors(measured: np.ndarray, reference: np.ndarray,
                    floor: float = 0.0) -> np.ndarray:
    """|y - y0| / |y0| at points where |y0| > floor (others dropped)."""
    y = np.asarray(measured, dtype=float)
    y0 = np.asarray(reference, dtype=float)
    mask = np.abs(y0) > max(floor, 1e-300)
    return np.abs(y[mask] - y0[mask]) / np.abs(y0[mask])


FLAVOR_NAMES = ("e", "mu", "tau")


def score(result: RunResult) -> ScoreReport:
    """Per-curve fit quality of the run against the closed-form reference."""
    cfg = result.config
    out = []
    for (init, vmv, dlt) in cfg.curves():
        ref = analytic_reference(cfg, init, vmv, dlt)
        meas = result.curve_mean(init, vmv, dlt)
        for f in range(3):
            rel = relative_errors(meas[:, f], ref[:, f], floor=1e-12)
            out.append(CurveScore(
                init_flavor=init, vm=vmv, delta=dlt, final_flavor=FLAVOR_NAMES[f],
                r_squared=r_squared(meas[:, f], ref[:, f]),
                mean_relative_error=float(rel.mean()) if rel.size else 0.0,
                max_relative_error=float(rel.max()) if rel.size else 0.0,
                n_points=meas.shape[0],
            ))
    return ScoreReport(curves=out, shots=cfg.shots, repeats=cfg.repeats)


# --- emission ----------------------------------------------------------------

def config_to_dict(config: ScenarioConfig) -> dict:
    d = asdict(config)
    d["params"] = asdict(config.params)
    return d


def config_from_dict(d: dict) -> ScenarioConfig:
    d = dict(d)
    params = d.pop("params", None)
    for key in ("init_flavors", "vm_list", "delta_list"):
        if key in d:
            d[key] = tuple(d[key])
    cfg = ScenarioConfig(**d)
    if params is not None:
        cfg = replace(cfg, params=OscillationParams(**params))
    return cfg


def emit(result: RunResult, out_dir) -> dict:
    """Write counts CSV, the replayable manifest, and gnuplot curve files."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    counts_path = os.path.join(out_dir, "counts.csv")
    with open(counts_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in result.rows:
            writer.writerow([
                r.scenario, repr(r.sweep_value), r.init_flavor,
                r.n0, r.n1, r.n2, r.shots, r.seed,
                repr(r.p0), repr(r.p1), repr(r.p2),
                repr(r.vm), repr(r.delta), r.repeat,
            ])
    paths["counts"] = counts_path

    manifest_path = os.path.join(out_dir, "manifest.json")
    manifest = {
        "config": config_to_dict(result.config),
        "checks": result.checks,
        "elapsed_s": result.elapsed_s,
        "versions": {"nuqutrit": __version__, "numpy": np.__version__},
        "written_at_unix": time.time(),
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    paths["manifest"] = manifest_path

    curves_dir = os.path.join(out_dir, "curves")
    os.makedirs(curves_dir, exist_ok=True)
    cfg = result.config
    for (init, vmv, dlt) in cfg.curves():
        ref = analytic_reference(cfg, init, vmv, dlt)
        meas = result.curve_mean(init, vmv, dlt)
        name = f"{cfg.scenario}_init-{init}_vm-{vmv:g}_delta-{dlt:g}.dat"
        path = os.path.join(curves_dir, name)
        with open(path, "w") as fh:
            fh.write("# sweep_value p_e p_mu p_tau ref_e ref_mu ref_tau\n")
            for x, m, rf in zip(cfg.grid(), meas, ref):
                cols = [x, *m, *rf]
                fh.write(" ".join(repr(float(c)) for c in cols) + "\n")
        paths[name] = path
    return paths


def read_counts_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(RunRow(
                scenario=rec["scenario"],
                sweep_value=float(rec["L_over_E_or_E"]),
                init_flavor=rec["init_flavor"],
                vm=float(rec["vm"]),
                delta=float(rec["delta"]),
                repeat=int(rec["repeat"]),
                n0=int(rec["n0"]), n1=int(rec["n1"]), n2=int(rec["n2"]),
                shots=int(rec["shots"]), seed=int(rec["seed"]),
                p0=float(rec["mitigated_p0"]),
                p1=float(rec["mitigated_p1"]),
                p2=float(rec["mitigated_p2"]),
            ))
    return rows


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def replay(manifest_path, device: MockTransmon | None = None) -> RunResult:
    """Re-run the exact configuration recorded in a manifest."""
    manifest = load_manifest(manifest_path)
    config = config_from_dict(manifest["config"])
    return run_scenario(config, device=device)
