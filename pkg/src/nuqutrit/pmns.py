"""Analytic three-flavor oscillation engine.

Flavor states map to indices 0/1/2 = e/mu/tau.  Mixing matrices and
Hamiltonians are plain (3, 3) complex ndarrays.  Mass-squared splittings are
in eV^2, baselines in km, energies in GeV; the single unit constant
``RAD_PER_EV2_KM_PER_GEV`` converts dm2 * L / (2 E) into radians.

Matter effects use the effective ("hatted") mixing parameters of the
Denton-Minakata-Parke rediagonalization; :func:`exact_matter_oracle` provides
the independent exact-diagonalization cross-check.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

FLAVORS = ("e", "mu", "tau")

# phase[rad] = RAD_PER_EV2_KM_PER_GEV * dm2[eV^2] * L[km] / E[GeV]  for dm2*L/(2E)
RAD_PER_EV2_KM_PER_GEV = 2.0 * 1.26693

# matter potential range over which the effective-parameter approximation is accepted
VM_MAX_EV2 = 1e-2


def flavor_index(flavor) -> int:
    """Accept 'e'/'mu'/'tau' or 0/1/2."""
    if isinstance(flavor, str):
        return FLAVORS.index(flavor)
    i = int(flavor)
    if i not in (0, 1, 2):
        raise ValueError(f"flavor must be one of {FLAVORS} or 0..2, got {flavor!r}")
    return i


@dataclass(frozen=True)
class OscillationParams:
    """Mixing angles (rad), CP phase (rad) and mass-squared splittings (eV^2)."""

    theta12: float
    theta23: float
    theta13: float
    delta: float = 0.0
    dm2_21: float = 7.42e-5
    dm2_31: float = 2.510e-3

    def __post_init__(self):
        for name in ("theta12", "theta23", "theta13", "delta", "dm2_21", "dm2_31"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.dm2_21 <= 0:
            raise ValueError("dm2_21 must be positive (normal-hierarchy convention)")

    @property
    def dm2_32(self) -> float:
        return self.dm2_31 - self.dm2_21

    def with_delta(self, delta: float) -> "OscillationParams":
        return replace(self, delta=delta)


# NuFIT 5.1 normal-ordering central values
NUFIT_PARAMS = OscillationParams(
    theta12=math.radians(33.45),
    theta23=math.radians(42.1),
    theta13=math.radians(8.62),
    delta=0.0,
    dm2_21=7.42e-5,
    dm2_31=2.510e-3,
)

_PARAM_FILE_KEYS = ("theta12_deg", "theta23_deg", "theta13_deg",
                    "delta_deg", "dm2_21_ev2", "dm2_31_ev2")


def params_from_json(path) -> OscillationParams:
    """Load oscillation parameters from a JSON file with degree-valued angles.

    Missing keys fall back to the NuFIT 5.1 defaults.
    """
    with open(path) as fh:
        raw = json.load(fh)
    unknown = set(raw) - set(_PARAM_FILE_KEYS)
    if unknown:
        raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
    base = NUFIT_PARAMS
    return OscillationParams(
        theta12=math.radians(raw.get("theta12_deg", math.degrees(base.theta12))),
        theta23=math.radians(raw.get("theta23_deg", math.degrees(base.theta23))),
        theta13=math.radians(raw.get("theta13_deg", math.degrees(base.theta13))),
        delta=math.radians(raw.get("delta_deg", math.degrees(base.delta))),
        dm2_21=raw.get("dm2_21_ev2", base.dm2_21),
        dm2_31=raw.get("dm2_31_ev2", base.dm2_31),
    )


def params_to_json(params: OscillationParams, path) -> None:
    payload = {
        "theta12_deg": math.degrees(params.theta12),
        "theta23_deg": math.degrees(params.theta23),
        "theta13_deg": math.degrees(params.theta13),
        "delta_deg": math.degrees(params.delta),
        "dm2_21_ev2": params.dm2_21,
        "dm2_31_ev2": params.dm2_31,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class Baseline:
    """Propagation distance/energy, either as (L, E) or directly as L/E."""

    length_km: float | None = None
    energy_gev: float | None = None
    l_over_e: float | None = None

    def __post_init__(self):
        if self.l_over_e is None:
            if self.length_km is None or self.energy_gev is None:
                raise ValueError("give either l_over_e or both length_km and energy_gev")
            if self.energy_gev <= 0:
                raise ValueError("energy must be positive")
            if self.length_km < 0:
                raise ValueError("length must be nonnegative")
        else:
            if self.l_over_e < 0:
                raise ValueError("l_over_e must be nonnegative")

    @property
    def ratio(self) -> float:
        """L/E in km/GeV."""
        if self.l_over_e is not None:
            return self.l_over_e
        return self.length_km / self.energy_gev


@dataclass(frozen=True)
class MatterParams:
    """Matter-effective mixing parameters at Wolfenstein potential vm (eV^2)."""

    vm: float
    theta12_hat: float
    theta13_hat: float
    theta23_hat: float
    dm2_21_hat: float
    dm2_31_hat: float
    dm2_ee: float
    dm2_ee_hat: float
    a12: float

    @property
    def dm2_32_hat(self) -> float:
        return self.dm2_31_hat - self.dm2_21_hat


def pmns_factors(params: OscillationParams):
    """The three rotation factors whose product is the mixing matrix.

    Returned in product order: the 2-3 rotation, the 1-3 rotation carrying
    the CP phase, and the 1-2 rotation.
    """
    s12, c12 = math.sin(params.theta12), math.cos(params.theta12)
    s23, c23 = math.sin(params.theta23), math.cos(params.theta23)
    s13, c13 = math.sin(params.theta13), math.cos(params.theta13)
    eid = complex(math.cos(params.delta), math.sin(params.delta))
    m23 = np.array([[1, 0, 0], [0, c23, s23], [0, -s23, c23]], dtype=complex)
    m13 = np.array(
        [[c13, 0, s13 * eid.conjugate()], [0, 1, 0], [-s13 * eid, 0, c13]],
        dtype=complex,
    )
    m12 = np.array([[c12, s12, 0], [-s12, c12, 0], [0, 0, 1]], dtype=complex)
    return m23, m13, m12


def build_pmns(params: OscillationParams) -> np.ndarray:
    """Unitary flavor-mass mixing matrix; U[0, 2] = sin(theta13) e^{-i delta}."""
    s12, c12 = math.sin(params.theta12), math.cos(params.theta12)
    s23, c23 = math.sin(params.theta23), math.cos(params.theta23)
    s13, c13 = math.sin(params.theta13), math.cos(params.theta13)
    eid = complex(math.cos(params.delta), math.sin(params.delta))
    emd = eid.conjugate()
    return np.array(
        [
            [c12 * c13, s12 * c13, s13 * emd],
            [-s12 * c23 - c12 * s23 * s13 * eid,
             c12 * c23 - s12 * s23 * s13 * eid,
             s23 * c13],
            [s12 * s23 - c12 * c23 * s13 * eid,
             -c12 * s23 - s12 * c23 * s13 * eid,
             c23 * c13],
        ],
        dtype=complex,
    )


def mass_matrix_ev2(params: OscillationParams, vm: float = 0.0) -> np.ndarray:
    """2E*H in eV^2: U diag(0, dm2_21, dm2_31) U^dag + diag(vm, 0, 0)."""
    u = build_pmns(params)
    m = u @ np.diag([0.0, params.dm2_21, params.dm2_31]).astype(complex) @ u.conj().T
    m[0, 0] += vm
    return m


def build_hamiltonian(params: OscillationParams, vm: float, energy_gev: float) -> np.ndarray:
    """Hermitian Hamiltonian (1/2E) * [mass term + matter potential], eV^2/GeV."""
    if energy_gev <= 0:
        raise ValueError("energy must be positive")
    return mass_matrix_ev2(params, vm) / (2.0 * energy_gev)


def matter_effective_params(params: OscillationParams, vm: float) -> MatterParams:
    """Effective mixing angles and splittings at matter potential vm.

    Valid for vm in [0, VM_MAX_EV2]; at vm = 0 every hatted quantity reduces
    to its vacuum counterpart.
    """
    if not 0.0 <= vm <= VM_MAX_EV2:
        raise ValueError(f"vm={vm} outside validated range [0, {VM_MAX_EV2}] eV^2")
    t12, t13 = params.theta12, params.theta13
    dm21, dm31 = params.dm2_21, params.dm2_31
    dm32 = params.dm2_32
    c2t12, s2t12 = math.cos(2 * t12), math.sin(2 * t12)
    c2t13, s2t13 = math.cos(2 * t13), math.sin(2 * t13)

    dm2_ee = math.cos(t12) ** 2 * dm31 + math.sin(t12) ** 2 * dm32
    dm2_ee_hat = dm2_ee * math.sqrt((c2t13 - vm / dm2_ee) ** 2 + s2t13**2)
    a12 = 0.5 * (vm + dm2_ee - dm2_ee_hat)

    s13_hat_sq = 0.5 - (dm2_ee * c2t13 - vm) / (2.0 * dm2_ee_hat)
    theta13_hat = math.asin(math.sqrt(_clip01(s13_hat_sq)))

    dm2_21_hat = dm21 * math.sqrt(
        (c2t12 - a12 / dm21) ** 2 + math.cos(t13 - theta13_hat) ** 2 * s2t12**2
    )
    s12_hat_sq = 0.5 - (dm21 * c2t12 - a12) / (2.0 * dm2_21_hat)
    theta12_hat = math.asin(math.sqrt(_clip01(s12_hat_sq)))

    dm2_31_hat = (dm31 + 0.25 * vm + 0.5 * (dm2_21_hat - dm21)
                  + 0.75 * (dm2_ee_hat - dm2_ee))
    return MatterParams(
        vm=vm,
        theta12_hat=theta12_hat,
        theta13_hat=theta13_hat,
        theta23_hat=params.theta23,
        dm2_21_hat=dm2_21_hat,
        dm2_31_hat=dm2_31_hat,
        dm2_ee=dm2_ee,
        dm2_ee_hat=dm2_ee_hat,
        a12=a12,
    )


def _clip01(x: float, tol: float = 1e-12) -> float:
    # square-root/arcsin arguments may leave [0, 1] by rounding only
    if x < -tol or x > 1.0 + tol:
        raise ValueError(f"argument {x} outside [0, 1] beyond tolerance")
    return min(max(x, 0.0), 1.0)


def effective_params(params: OscillationParams, vm: float) -> OscillationParams:
    """Oscillation parameters with the hatted matter values substituted in."""
    if vm == 0.0:
        return params
    mp = matter_effective_params(params, vm)
    return OscillationParams(
        theta12=mp.theta12_hat,
        theta23=mp.theta23_hat,
        theta13=mp.theta13_hat,
        delta=params.delta,
        dm2_21=mp.dm2_21_hat,
        dm2_31=mp.dm2_31_hat,
    )


def evolution_phases(params, baseline: Baseline) -> tuple[float, float]:
    """Diagonal evolution phases (phi01, phi12) in radians.

    phi01 = -dm2_21 * L/(2E) and phi12 = -dm2_32 * L/(2E); pass a
    MatterParams to use the hatted splittings.
    """
    if isinstance(params, MatterParams):
        dm21, dm32 = params.dm2_21_hat, params.dm2_32_hat
    else:
        dm21, dm32 = params.dm2_21, params.dm2_32
    ratio = baseline.ratio
    phi01 = -RAD_PER_EV2_KM_PER_GEV * dm21 * ratio
    phi12 = -RAD_PER_EV2_KM_PER_GEV * dm32 * ratio
    return phi01, phi12


def evolution_operator(params: OscillationParams, baseline: Baseline,
                       vm: float = 0.0) -> np.ndarray:
    """Unitary U diag(1, e^{i phi01}, e^{i (phi01+phi12)}) U^dag.

    The lightest state carries phase 1; with vm > 0 the hatted parameters
    are used throughout.
    """
    eff = effective_params(params, vm)
    u = build_pmns(eff)
    phi01, phi12 = evolution_phases(eff, baseline)
    lam = np.diag([1.0, np.exp(1j * phi01), np.exp(1j * (phi01 + phi12))])
    return u @ lam @ u.conj().T


def oscillation_probability(params: OscillationParams, alpha, beta,
                            baseline: Baseline, vm: float = 0.0) -> float:
    """P(alpha -> beta) from the coherent sum over mass eigenstates."""
    return float(oscillation_probabilities(params, alpha, baseline, vm)[flavor_index(beta)])


def oscillation_probabilities(params: OscillationParams, alpha,
                              baseline: Baseline, vm: float = 0.0) -> np.ndarray:
    """All three P(alpha -> beta), beta = e, mu, tau; sums to 1."""
    a = flavor_index(alpha)
    eff = effective_params(params, vm)
    u = build_pmns(eff)
    ratio = baseline.ratio
    phases = np.exp(
        -1j * RAD_PER_EV2_KM_PER_GEV * np.array([0.0, eff.dm2_21, eff.dm2_31]) * ratio
    )
    amps = (np.conj(u[a, :])[None, :] * u * phases[None, :]).sum(axis=1)
    return np.abs(amps) ** 2


def exact_matter_oracle(params: OscillationParams, alpha, beta,
                        baseline: Baseline, vm: float) -> float:
    """Oscillation probability from exact diagonalization of the full Hamiltonian.

    Independent of the effective-parameter path: eigendecomposes the
    (Hermitian) mass matrix including the potential and propagates each
    eigenstate.  At vm = 0 it agrees with :func:`oscillation_probability`.
    """
    a, b = flavor_index(alpha), flavor_index(beta)
    m = mass_matrix_ev2(params, vm)
    evals, evecs = np.linalg.eigh(m)
    resid = np.abs(m @ evecs - evecs * evals[None, :]).max()
    if resid > 1e-10:
        raise ArithmeticError(f"eigendecomposition residual {resid:.3e}")
    ratio = baseline.ratio
    phases = np.exp(-1j * RAD_PER_EV2_KM_PER_GEV * evals * ratio)
    amp = np.sum(np.conj(evecs[a, :]) * evecs[b, :] * phases)
    return float(abs(amp) ** 2)


def is_unitary(m: np.ndarray, tol: float = 1e-12) -> bool:
    return np.abs(m.conj().T @ m - np.eye(m.shape[0])).max() < tol


def is_hermitian(m: np.ndarray, tol: float = 1e-12) -> bool:
    return np.abs(m - m.conj().T).max() < tol
