"""Three-level statevector machine with shot sampling, readout noise and mitigation.

States are length-3 complex arrays over the basis |0>, |1>, |2> (flavor
encoding e, mu, tau).  Readout confusion matrices A are column-stochastic:
A[i, j] = P(classified i | prepared j).  The inter-subspace frame-advance
quirk of the pulse hardware is modeled by :class:`PhaseAdvanceModel` and can
be injected, compensated, or recovered from data by maximum likelihood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares, minimize, minimize_scalar

from .decomposition import GateSequence, GivensGate, givens_matrix, _wrap_phase
from .pmns import flavor_index

# readout confusion with the reference per-state accuracies on the diagonal
DEFAULT_CONFUSION = np.array([
    [0.985, 0.0085, 0.0065],
    [0.0085, 0.943, 0.0485],
    [0.0065, 0.0485, 0.945],
])

CONDITION_FLAG_THRESHOLD = 1e6


def basis_state(flavor) -> np.ndarray:
    v = np.zeros(3, dtype=complex)
    v[flavor_index(flavor)] = 1.0
    return v


def apply_sequence(initial, seq: GateSequence) -> np.ndarray:
    """Run a gate sequence on an initial flavor (or state vector)."""
    state = np.asarray(initial, dtype=complex) if isinstance(initial, np.ndarray) \
        else basis_state(initial)
    for gate in seq:
        state = givens_matrix(gate) @ state
    return state


def probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(np.asarray(state)) ** 2
    return p


@dataclass(frozen=True)
class ShotCounts:
    n0: int
    n1: int
    n2: int
    shots: int
    seed: int | None = None

    def __post_init__(self):
        if self.n0 + self.n1 + self.n2 != self.shots:
            raise ValueError("counts must sum to shots")

    def as_array(self) -> np.ndarray:
        return np.array([self.n0, self.n1, self.n2], dtype=np.int64)

    @property
    def frequencies(self) -> np.ndarray:
        if self.shots == 0:
            return np.zeros(3)
        return self.as_array() / self.shots


def sample_counts(probs, shots: int, seed) -> ShotCounts:
    """Multinomial draw of measurement outcomes, reproducible per seed."""
    p = np.asarray(probs, dtype=float)
    if p.min() < -1e-9 or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probs must lie on the probability simplex")
    if shots == 0:
        return ShotCounts(0, 0, 0, 0, seed=_seed_int(seed))
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    rng = _as_rng(seed)
    n = rng.multinomial(shots, p)
    return ShotCounts(int(n[0]), int(n[1]), int(n[2]), int(shots), seed=_seed_int(seed))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _seed_int(seed):
    return seed if isinstance(seed, (int, np.integer)) else None


def check_confusion(a: np.ndarray, tol: float = 1e-12) -> float:
    """Validate a readout-assignment matrix; returns its condition number."""
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise ValueError("confusion matrix must be 3x3")
    if a.min() < -tol or a.max() > 1.0 + tol:
        raise ValueError("confusion entries must lie in [0, 1]")
    if np.abs(a.sum(axis=0) - 1.0).max() > max(tol, 1e-9):
        raise ValueError("confusion columns must sum to 1")
    return float(np.linalg.cond(a))


def confuse_distribution(probs, a: np.ndarray) -> np.ndarray:
    """Classified outcome distribution A @ p."""
    return np.asarray(a, dtype=float) @ np.asarray(probs, dtype=float)


def confuse_counts(counts: ShotCounts, a: np.ndarray, seed) -> ShotCounts:
    """Reclassify each shot through the confusion columns."""
    rng = _as_rng(seed)
    out = np.zeros(3, dtype=np.int64)
    for j, nj in enumerate(counts.as_array()):
        if nj:
            out += rng.multinomial(int(nj), np.asarray(a, dtype=float)[:, j])
    return ShotCounts(int(out[0]), int(out[1]), int(out[2]), counts.shots,
                      seed=_seed_int(seed))


def apply_confusion(probs_or_counts, a: np.ndarray, seed=None):
    """Inject readout confusion into a distribution or into sampled counts."""
    if isinstance(probs_or_counts, ShotCounts):
        return confuse_counts(probs_or_counts, a, seed)
    return confuse_distribution(probs_or_counts, a)


@dataclass(frozen=True)
class MitigationResult:
    raw: np.ndarray        # A^{-1} f before clipping, may leave the simplex
    probs: np.ndarray      # clipped to [0, 1] and renormalized
    condition: float
    flagged: bool


def mitigate(frequencies, a: np.ndarray) -> MitigationResult:
    """Invert readout confusion on observed frequencies.

    Negative quasi-probabilities are clipped to zero and the result
    renormalized; the pre-clip vector is kept in ``raw``.  A condition
    number above CONDITION_FLAG_THRESHOLD flags the result.
    """
    cond = check_confusion(a)
    f = np.asarray(frequencies, dtype=float)
    raw = np.linalg.solve(np.asarray(a, dtype=float), f)
    clipped = np.clip(raw, 0.0, None)
    total = clipped.sum()
    probs = clipped / total if total > 0 else np.full(3, 1.0 / 3.0)
    return MitigationResult(raw=raw, probs=probs, condition=cond,
                            flagged=cond > CONDITION_FLAG_THRESHOLD)


@dataclass(frozen=True)
class PhaseAdvanceModel:
    """Inter-subspace frame offsets accumulated while the other subspace is driven.

    Each pulse of duration td advances the idle subspace's frame register by
    +/- omega_off, where omega_off = 2 pi (f12 - f01) td reduced mod 2 pi.
    Gate axes pick up their subspace's accumulated register at execution time.
    """

    f01_ghz: float
    f12_ghz: float
    td_ns: float

    @property
    def omega_off(self) -> float:
        return _wrap_phase(2.0 * math.pi * (self.f12_ghz - self.f01_ghz) * self.td_ns)

    @classmethod
    def from_device(cls, device) -> "PhaseAdvanceModel":
        return cls(f01_ghz=device.f01_ghz, f12_ghz=device.f12_ghz,
                   td_ns=device.td_ns)

    def frame_offsets(self, seq: GateSequence) -> np.ndarray:
        """Accumulated frame phase seen by each gate (first gate is always 0)."""
        off = self.omega_off
        acc = {"01": 0.0, "12": 0.0}
        out = []
        for gate in seq:
            out.append(_wrap_phase(acc[gate.subspace]))
            if gate.subspace == "01":
                acc["12"] += off
            else:
                acc["01"] -= off
        return np.array(out)


def apply_phase_advances(seq: GateSequence, model: PhaseAdvanceModel,
                         compensate: bool = False) -> GateSequence:
    """Shift gate axes by the accumulated frame offsets.

    Without compensation this injects the hardware distortion; with
    compensation the pre-shifted sequence runs back to the ideal one when the
    distortion is applied on top.
    """
    offsets = model.frame_offsets(seq)
    sign = -1.0 if compensate else 1.0
    gates = tuple(
        GivensGate(g.subspace, g.phi + sign * off, g.theta)
        for g, off in zip(seq, offsets)
    )
    return GateSequence(gates, scenario=seq.scenario, alphas=seq.alphas,
                        source=dict(seq.source))


def sequence_with_phase_vector(seq: GateSequence, phases) -> GateSequence:
    """Template with free per-gate axis corrections (first gate fixed at 0)."""
    phases = np.asarray(phases, dtype=float)
    if len(phases) != len(seq) - 1:
        raise ValueError("need one phase per gate after the first")
    gates = [seq.gates[0]]
    gates += [GivensGate(g.subspace, g.phi + ph, g.theta)
              for g, ph in zip(seq.gates[1:], phases)]
    return GateSequence(tuple(gates), scenario=seq.scenario, alphas=seq.alphas,
                        source=dict(seq.source))


@dataclass(frozen=True)
class PhaseFitResult:
    phases: np.ndarray
    log_likelihood: float
    uncertainties: np.ndarray
    n_evaluations: int


def gauge_direction(seq: GateSequence) -> np.ndarray | None:
    """Unobservable direction of the per-gate phase corrections.

    Advancing every axis of one subspace by a common constant conjugates the
    circuit by a diagonal and leaves all basis-state probabilities unchanged;
    with the first gate's axis fixed, only the other subspace's common shift
    remains free.  Returns the indicator of that direction over the free
    phases (gates after the first), or None when absent.
    """
    first = seq.gates[0].subspace
    free_sub = "12" if first == "01" else "01"
    v = np.array([1.0 if g.subspace == free_sub else 0.0 for g in seq.gates[1:]])
    return v if v.any() else None


def gauge_fix_phases(phases, seq: GateSequence) -> np.ndarray:
    """Minimal-norm representative along the unobservable gauge direction."""
    phases = np.array([_wrap_phase(p) for p in phases], dtype=float)
    v = gauge_direction(seq)
    if v is None:
        return phases
    support = phases[v > 0]

    def cost(c):
        return sum(_wrap_phase(p - c) ** 2 for p in support)

    grid = np.linspace(-math.pi, math.pi, 720, endpoint=False)
    best = min(grid, key=cost)
    step = 2 * math.pi / 720
    res = minimize_scalar(cost, bounds=(best - step, best + step),
                          method="bounded", options={"xatol": 1e-12})
    c = res.x if res.fun <= cost(best) else best
    return np.array([_wrap_phase(p - c * vi) for p, vi in zip(phases, v)])


def fit_phase_advances(observations, sequences, initial,
                       n_scan: int = 192, cycles: int = 4) -> PhaseFitResult:
    """Recover per-gate axis corrections by maximum likelihood.

    observations: outcome counts (or probability weights) per grid sequence,
    shaped (G, 3) for a single initial flavor or (n_init, G, 3) when
    ``initial`` is a sequence of flavors (richer data removes the near-
    degenerate ghost optima of single-flavor fits); sequences: the ideal
    templates, all of equal length k+1, whose gates 2..k+1 carry the unknown
    phases.  The multinomial log-likelihood is maximized over (-pi, pi]^k by
    deterministic multistart cyclic coordinate scans (per-coordinate the
    model is a second-order trigonometric polynomial, scanned densely and
    polished by Brent), a quasi-Newton pass, and a Gauss-Newton polish;
    uncertainties come from the curvature at the optimum.

    A common axis advance of all gates in one subspace is unobservable (see
    gauge_direction); the returned vector is the minimal-norm representative
    along that flat direction, so compare against gauge_fix_phases of the
    injected truth.
    """
    seqs = list(sequences)
    k = len(seqs[0]) - 1
    if any(len(s) != k + 1 for s in seqs):
        raise ValueError("all sequences must have equal length")
    if len(seqs) < k:
        raise ValueError("need at least as many grid points as free phases")
    obs = np.asarray(observations, dtype=float)
    if isinstance(initial, (list, tuple)):
        inits = list(initial)
        if obs.shape != (len(inits), len(seqs), 3):
            raise ValueError("observations must be (n_init, n_sequences, 3)")
        obs = obs.reshape(len(inits) * len(seqs), 3)
    else:
        inits = [initial]
        if obs.shape != (len(seqs), 3):
            raise ValueError("observations must be (n_sequences, 3)")
    init_vecs = [np.asarray(i, dtype=complex) if isinstance(i, np.ndarray)
                 else basis_state(i) for i in inits]

    # per gate j: cos(theta/2), -i sin(theta/2) e^{+/- i axis} over the grid
    g_count = len(seqs)
    cos_half_g = np.empty((k + 1, g_count))
    lower_g = np.empty((k + 1, g_count), dtype=complex)   # goes with e^{+i phase}
    upper_g = np.empty((k + 1, g_count), dtype=complex)   # goes with e^{-i phase}
    subspace = []
    for j in range(k + 1):
        subspace.append(seqs[0].gates[j].subspace)
        for g, s in enumerate(seqs):
            gate = s.gates[j]
            if gate.subspace != subspace[j]:
                raise ValueError("sequences must share a gate-subspace template")
            cos_half_g[j, g] = math.cos(gate.theta / 2.0)
            amp = -1j * math.sin(gate.theta / 2.0)
            lower_g[j, g] = amp * np.exp(1j * gate.phi)
            upper_g[j, g] = amp * np.exp(-1j * gate.phi)

    # extend rows over the initial states (sequences repeat per initial)
    n_init = len(init_vecs)
    cos_half = np.tile(cos_half_g, (1, n_init))
    lower = np.tile(lower_g, (1, n_init))
    upper = np.tile(upper_g, (1, n_init))

    idx = {"01": (0, 1), "12": (1, 2)}

    def propagate(v, j, extra_phase):
        """Apply gate j with axis shifted by extra_phase to (rows, 3) states."""
        i0, i1 = idx[subspace[j]]
        if np.isscalar(extra_phase):
            ep = np.exp(1j * extra_phase)
        else:
            ep = np.exp(1j * np.asarray(extra_phase))
        out = v.copy()
        out[:, i0] = cos_half[j] * v[:, i0] + upper[j] / ep * v[:, i1]
        out[:, i1] = lower[j] * ep * v[:, i0] + cos_half[j] * v[:, i1]
        return out

    v0 = np.concatenate([np.tile(vec, (g_count, 1)) for vec in init_vecs])
    weights = obs
    total_weight = weights.sum()
    eps = 1e-300

    def model_probs(phases):
        v = propagate(v0, 0, 0.0)
        for j in range(1, k + 1):
            v = propagate(v, j, phases[j - 1])
        return np.abs(v) ** 2

    def nll(phases):
        p = model_probs(phases)
        return -np.sum(weights * np.log(p + eps))

    evaluations = 0

    def nll_counted(phases):
        nonlocal evaluations
        evaluations += 1
        return nll(phases)

    scan = np.linspace(-math.pi, math.pi, n_scan, endpoint=False)

    def coordinate_scan(phases):
        # amplitude for coordinate m is linear in e^{+/- i phi_m}, so p(phi)
        # over the whole scan comes from three precomputed state vectors
        phases = phases.copy()
        for _ in range(cycles):
            for m in range(1, k + 1):
                prefix = propagate(v0, 0, 0.0)
                for j in range(1, m):
                    prefix = propagate(prefix, j, phases[j - 1])
                i0, i1 = idx[subspace[m]]
                base = prefix.copy()
                base[:, i0] = cos_half[m] * prefix[:, i0]
                base[:, i1] = cos_half[m] * prefix[:, i1]
                vec_up = np.zeros_like(prefix)
                vec_up[:, i0] = upper[m] * prefix[:, i1]   # carries e^{-i phi}
                vec_dn = np.zeros_like(prefix)
                vec_dn[:, i1] = lower[m] * prefix[:, i0]   # carries e^{+i phi}
                for j in range(m + 1, k + 1):
                    base = propagate(base, j, phases[j - 1])
                    vec_up = propagate(vec_up, j, phases[j - 1])
                    vec_dn = propagate(vec_dn, j, phases[j - 1])
                ep = np.exp(1j * scan)[:, None, None]
                amp = base[None] + vec_up[None] / ep + vec_dn[None] * ep
                p = np.abs(amp) ** 2
                vals = -np.sum(weights[None] * np.log(p + eps), axis=(1, 2))
                best = int(np.argmin(vals))
                step = 2 * math.pi / n_scan

                def coord_obj(phi, m=m):
                    trial = phases.copy()
                    trial[m - 1] = phi
                    return nll_counted(trial)

                res = minimize_scalar(coord_obj,
                                      bounds=(scan[best] - step, scan[best] + step),
                                      method="bounded",
                                      options={"xatol": 1e-12})
                phases[m - 1] = res.x
        return phases

    # Pearson-style residual whose Gauss-Newton steps converge quadratically
    # along the shallow valleys where quasi-Newton stalls; the exact-data
    # optimum coincides with maximum likelihood and near-degenerate ghosts
    # separate cleanly in residual norm
    freqs = weights / np.maximum(weights.sum(axis=1, keepdims=True), eps)
    scale = np.sqrt(np.maximum(freqs, 1e-6))

    def residuals(ph):
        nonlocal evaluations
        evaluations += 1
        return ((model_probs(ph) - freqs) / scale).ravel()

    # deterministic multistart: ghost optima of the trigonometric likelihood
    # can fit the data to ~1e-9, so several scan starts are polished and the
    # candidate with the smallest residual norm (then likelihood) wins
    starts = [np.zeros(k)]
    for v in (math.pi / 2, -math.pi / 2, math.pi, 2.2, -1.1):
        starts.append(np.full(k, v))
    starts.append(np.array([(math.pi / 2) * (-1) ** i for i in range(k)]))
    starts.append(np.array([(2 * math.pi * i / max(k, 1)) - math.pi for i in range(k)]))

    candidates = []
    for start in starts:
        phases = coordinate_scan(start)
        res = minimize(nll_counted, phases, method="L-BFGS-B",
                       options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
        if res.fun <= nll(phases):
            phases = res.x
        ls = least_squares(residuals, phases, method="lm", xtol=1e-15, ftol=1e-15)
        if nll(ls.x) <= nll(phases) + 1e-9:
            phases = ls.x
        candidates.append((float(np.linalg.norm(residuals(phases))),
                           float(nll(phases)), phases))
    candidates.sort(key=lambda c: (round(c[0], 12), c[1]))
    phases = candidates[0][2].copy()

    # final per-coordinate Brent refinement of the likelihood itself
    for m in range(1, k + 1):
        def coord_obj(phi, m=m):
            trial = phases.copy()
            trial[m - 1] = phi
            return nll_counted(trial)

        r = minimize_scalar(coord_obj,
                            bounds=(phases[m - 1] - 0.02, phases[m - 1] + 0.02),
                            method="bounded", options={"xatol": 1e-12})
        if r.fun < nll(phases):
            phases[m - 1] = r.x

    phases = gauge_fix_phases(phases, seqs[0])
    final_nll = nll(phases)

    # curvature-based uncertainties
    h = 1e-4
    sigmas = np.empty(k)
    for m in range(k):
        up, dn = phases.copy(), phases.copy()
        up[m] += h
        dn[m] -= h
        second = (nll(up) - 2.0 * final_nll + nll(dn)) / h**2
        sigmas[m] = 1.0 / math.sqrt(second) if second > 0 else math.inf
    if total_weight <= 0:
        raise ValueError("observations carry no weight")
    return PhaseFitResult(phases=phases, log_likelihood=-final_nll,
                          uncertainties=sigmas, n_evaluations=evaluations)


def diagonal_equivalence_residual(a: np.ndarray, b: np.ndarray) -> float:
    """How far A is from D_L B D_R for unit diagonals D_L, D_R.

    Left and right diagonal factors are invisible to basis-state-in,
    basis-state-out probability measurements, so this is the natural
    unitary-level equivalence for circuits characterized that way.  The
    entrywise phase mismatch is fit by row+column phases (the moduli gauge)
    and the residual reported in max-entry norm.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    mod_gap = float(np.abs(np.abs(a) - np.abs(b)).max())
    weights = np.minimum(np.abs(a), np.abs(b))
    mask = weights > 1e-8
    if not mask.any():
        return mod_gap
    # align arg(a/b) with r_i + c_j by weighted alternating phase averaging
    ratio = np.where(mask, a * np.conj(np.where(mask, b, 1.0)), 0.0)
    ratio = np.where(mask, ratio / np.maximum(np.abs(ratio), 1e-300), 0.0)
    w = weights * mask
    rows = np.ones(3, dtype=complex)
    cols = np.ones(3, dtype=complex)
    for _ in range(80):
        num = (w * ratio * np.conj(cols)[None, :]).sum(axis=1)
        rows = np.where(np.abs(num) > 0, num / np.maximum(np.abs(num), 1e-300), 1.0)
        num = (w * ratio * np.conj(rows)[:, None]).sum(axis=0)
        cols = np.where(np.abs(num) > 0, num / np.maximum(np.abs(num), 1e-300), 1.0)
    model = rows[:, None] * b * cols[None, :]
    return max(mod_gap, float(np.abs(a - model)[mask].max()))


def depolarization_per_gate(decay_rate_khz: float, td_ns: float) -> float:
    """Per-gate depolarizing probability q = 1 - exp(-2 pi rate td)."""
    if decay_rate_khz < 0:
        raise ValueError("decay rate must be nonnegative")
    return 1.0 - math.exp(-2.0 * math.pi * decay_rate_khz * 1e3 * td_ns * 1e-9)


def run_with_gate_errors(initial, seq: GateSequence, under_rotation: float = 0.0,
                         depol_per_gate: float = 0.0) -> np.ndarray:
    """Density-matrix run with coherent and incoherent gate errors.

    Every gate angle is scaled by (1 + under_rotation / pi); after each gate
    the state is mixed toward maximally mixed with probability depol_per_gate.
    Returns the outcome probabilities.
    """
    if depol_per_gate < 0 or depol_per_gate > 1:
        raise ValueError("depolarization probability must be in [0, 1]")
    state = np.asarray(initial, dtype=complex) if isinstance(initial, np.ndarray) \
        else basis_state(initial)
    rho = np.outer(state, state.conj())
    scale = 1.0 + under_rotation / math.pi
    for gate in seq:
        g = givens_matrix(GivensGate(gate.subspace, gate.phi, gate.theta * scale))
        rho = g @ rho @ g.conj().T
        if depol_per_gate:
            rho = (1.0 - depol_per_gate) * rho + depol_per_gate * np.eye(3) / 3.0
    return np.real(np.diag(rho)).copy()
