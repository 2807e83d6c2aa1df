import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nuqutrit.decomposition import (
    GateSequence,
    GivensGate,
    compile_scenario,
    decompose,
    insert_evolution,
)
from nuqutrit.pmns import Baseline, NUFIT_PARAMS, evolution_phases, oscillation_probabilities
from nuqutrit.vm import (
    DEFAULT_CONFUSION,
    PhaseAdvanceModel,
    ShotCounts,
    apply_confusion,
    apply_phase_advances,
    apply_sequence,
    basis_state,
    check_confusion,
    confuse_counts,
    confuse_distribution,
    depolarization_per_gate,
    fit_phase_advances,
    gauge_direction,
    gauge_fix_phases,
    mitigate,
    probabilities,
    run_with_gate_errors,
    sample_counts,
    sequence_with_phase_vector,
)

MODEL = PhaseAdvanceModel(f01_ghz=5.237, f12_ghz=4.897, td_ns=160 * 0.222)


def vacuum_sequence(l_over_e=9000.0):
    return compile_scenario(NUFIT_PARAMS, "vacuum", Baseline(l_over_e=l_over_e))


class TestApplySequence:
    def test_empty_on_nue(self):
        state = apply_sequence("e", GateSequence(()))
        assert np.abs(state - np.array([1, 0, 0])).max() == 0.0

    def test_pi01_amplitude(self):
        state = apply_sequence("e", GateSequence((GivensGate("01", 0.0, math.pi),)))
        assert state[1] == pytest.approx(-1j, abs=1e-15)
        assert probabilities(state)[1] == pytest.approx(1.0, abs=1e-15)

    def test_vacuum_at_zero_returns_initial(self):
        r, rdag = decompose(NUFIT_PARAMS, "vacuum")
        seq = insert_evolution(r, rdag, 0.0, 0.0)
        for f in ("e", "mu", "tau"):
            p = probabilities(apply_sequence(f, seq))
            assert p[{"e": 0, "mu": 1, "tau": 2}[f]] == pytest.approx(1.0, abs=1e-12)

    def test_matches_reconstruct(self):
        from nuqutrit.decomposition import reconstruct
        seq = vacuum_sequence()
        m = reconstruct(seq)
        for a in range(3):
            direct = apply_sequence(a, seq)
            assert np.abs(direct - m[:, a]).max() < 1e-12

    def test_norm_preserved(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            seq = vacuum_sequence(rng.uniform(0, 33419))
            state = apply_sequence("mu", seq)
            assert abs(np.linalg.norm(state) - 1.0) < 1e-12

    def test_probabilities_match_analytics(self):
        bl = Baseline(l_over_e=21000.0)
        seq = compile_scenario(NUFIT_PARAMS, "vacuum", bl)
        p = probabilities(apply_sequence("tau", seq))
        ana = oscillation_probabilities(NUFIT_PARAMS, "tau", bl)
        assert np.abs(p - ana).max() < 1e-9


class TestProbabilities:
    def test_basis_one_hot(self):
        assert probabilities(basis_state("tau"))[2] == 1.0

    def test_equal_superposition(self):
        state = np.ones(3, dtype=complex) / math.sqrt(3)
        assert np.abs(probabilities(state) - 1 / 3).max() < 1e-15

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1), min_size=6, max_size=6))
    def test_normalized_states(self, vals):
        v = np.array(vals[:3]) + 1j * np.array(vals[3:])
        norm = np.linalg.norm(v)
        if norm < 1e-6:
            return
        p = probabilities(v / norm)
        assert abs(p.sum() - 1.0) < 1e-12


class TestSampling:
    def test_one_hot(self):
        c = sample_counts([0.0, 1.0, 0.0], 512, seed=1)
        assert (c.n0, c.n1, c.n2) == (0, 512, 0)

    def test_seeded_determinism(self):
        a = sample_counts([0.2, 0.5, 0.3], 8192, seed=42)
        b = sample_counts([0.2, 0.5, 0.3], 8192, seed=42)
        assert (a.n0, a.n1, a.n2) == (b.n0, b.n1, b.n2)

    def test_zero_shots(self):
        c = sample_counts([1.0, 0.0, 0.0], 0, seed=0)
        assert c.shots == 0 and c.as_array().sum() == 0

    def test_multinomial_4sigma(self):
        p = np.array([0.3, 0.6, 0.1])
        shots = 8192
        c = sample_counts(p, shots, seed=7)
        for i in range(3):
            sigma = math.sqrt(p[i] * (1 - p[i]) / shots)
            assert abs(c.frequencies[i] - p[i]) < 4 * sigma

    def test_counts_sum_invariant(self):
        with pytest.raises(ValueError):
            ShotCounts(1, 2, 3, 7)

    def test_invalid_probs(self):
        with pytest.raises(ValueError):
            sample_counts([0.5, 0.6, 0.2], 10, seed=0)


class TestConfusion:
    def test_default_matrix_valid(self):
        cond = check_confusion(DEFAULT_CONFUSION)
        assert cond < 10.0
        assert np.abs(DEFAULT_CONFUSION.sum(axis=0) - 1.0).max() < 1e-12
        assert np.diag(DEFAULT_CONFUSION) == pytest.approx([0.985, 0.943, 0.945])

    def test_identity_unchanged(self):
        p = np.array([0.2, 0.5, 0.3])
        assert np.abs(confuse_distribution(p, np.eye(3)) - p).max() == 0.0

    def test_one_hot_correct_fraction(self):
        out = confuse_distribution([0.0, 1.0, 0.0], DEFAULT_CONFUSION)
        assert out[1] == pytest.approx(0.943, abs=1e-12)

    def test_simplex_preserved(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = rng.dirichlet([1, 1, 1])
            out = confuse_distribution(p, DEFAULT_CONFUSION)
            assert abs(out.sum() - 1.0) < 1e-12
            assert out.min() >= 0

    def test_counts_dispatch(self):
        counts = ShotCounts(100, 200, 300, 600)
        noisy = apply_confusion(counts, DEFAULT_CONFUSION, seed=0)
        assert isinstance(noisy, ShotCounts)
        assert noisy.shots == 600

    def test_counts_statistics(self):
        counts = ShotCounts(0, 100000, 0, 100000)
        noisy = confuse_counts(counts, DEFAULT_CONFUSION, seed=5)
        assert noisy.frequencies[1] == pytest.approx(0.943, abs=0.01)

    def test_bad_matrix_rejected(self):
        with pytest.raises(ValueError):
            check_confusion(np.ones((3, 3)))


class TestMitigation:
    def test_exact_inverse(self):
        p = np.array([0.1, 0.6, 0.3])
        f = DEFAULT_CONFUSION @ p
        m = mitigate(f, DEFAULT_CONFUSION)
        assert np.abs(m.probs - p).max() < 1e-12
        assert not m.flagged

    def test_identity(self):
        p = np.array([0.25, 0.25, 0.5])
        m = mitigate(p, np.eye(3))
        assert np.abs(m.probs - p).max() == 0.0

    def test_negative_clipped_and_reported(self):
        # frequencies outside the image of the simplex give negative raw values
        f = np.array([1.0, 0.0, 0.0])
        a = np.array([[0.9, 0.3, 0.0], [0.1, 0.6, 0.1], [0.0, 0.1, 0.9]])
        m = mitigate(f, a)
        assert m.raw.min() < 0
        assert m.probs.min() >= 0
        assert m.probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_sampled_pipeline_error(self):
        # ideal -> confuse -> 8192 shots -> mitigate, 100 trials
        rng = np.random.default_rng(11)
        errors = []
        for trial in range(100):
            p = rng.dirichlet([2, 2, 2])
            noisy = confuse_distribution(p, DEFAULT_CONFUSION)
            counts = sample_counts(noisy, 8192, seed=rng)
            m = mitigate(counts.frequencies, DEFAULT_CONFUSION)
            errors.append(np.abs(m.probs - p).mean())
        assert np.mean(errors) < 0.02

    def test_unbiased_at_1e6_shots(self):
        p = np.array([0.2, 0.45, 0.35])
        noisy = confuse_distribution(p, DEFAULT_CONFUSION)
        counts = sample_counts(noisy, 10**6, seed=123)
        m = mitigate(counts.frequencies, DEFAULT_CONFUSION)
        assert np.abs(m.probs - p).max() < 2e-3

    def test_near_singular_flagged(self):
        d, o = 1 / 3 + 2e-7, 1 / 3 - 1e-7
        a = np.array([[d, o, o], [o, d, o], [o, o, d]])
        m = mitigate(np.array([0.4, 0.3, 0.3]), a)
        assert m.condition > 1e6
        assert m.flagged


class TestPhaseAdvances:
    def test_omega_off(self):
        raw = 2 * math.pi * (4.897 - 5.237) * MODEL.td_ns
        assert MODEL.omega_off == pytest.approx(math.remainder(raw, 2 * math.pi), abs=1e-12)

    def test_zero_anharmonicity_unchanged(self):
        model = PhaseAdvanceModel(f01_ghz=5.0, f12_ghz=5.0, td_ns=35.52)
        seq = vacuum_sequence()
        shifted = apply_phase_advances(seq, model)
        assert all(a.phi == b.phi for a, b in zip(seq, shifted))

    def test_six_gate_offset_pattern(self):
        seq = vacuum_sequence()
        offsets = MODEL.frame_offsets(seq)
        assert len(offsets) == 6
        assert offsets[0] == 0.0
        assert np.all(offsets[1:] != 0.0)  # 5 potentially nonzero corrections

    def test_eight_gate_offset_pattern(self):
        p = NUFIT_PARAMS.with_delta(1.0)
        seq = compile_scenario(p, "cp", Baseline(length_km=295.0, energy_gev=1.0))
        offsets = PhaseAdvanceModel(5.237, 4.897, 35.52).frame_offsets(seq)
        assert len(offsets) == 8
        assert offsets[0] == 0.0

    def test_compensation_restores_ideal(self):
        seq = vacuum_sequence(12000.0)
        ideal = probabilities(apply_sequence("mu", seq))
        distorted = probabilities(apply_sequence("mu", apply_phase_advances(seq, MODEL)))
        assert np.abs(distorted - ideal).max() > 1e-3
        compensated = apply_phase_advances(seq, MODEL, compensate=True)
        restored = probabilities(apply_sequence("mu", apply_phase_advances(compensated, MODEL)))
        assert np.abs(restored - ideal).max() < 1e-12


def _grid_sequences(scenario="vacuum", n=60, delta=0.0):
    params = NUFIT_PARAMS.with_delta(delta)
    r, rdag = decompose(params, scenario)
    seqs = []
    if scenario == "cp":
        xs = np.linspace(0.1, 2.0, n)
        for e in xs:
            phi01, phi12 = evolution_phases(params, Baseline(length_km=295.0, energy_gev=e))
            seqs.append(insert_evolution(r, rdag, phi01, phi12, scenario))
    else:
        xs = np.linspace(0.0, 33419.0, n)
        for le in xs:
            phi01, phi12 = evolution_phases(params, Baseline(l_over_e=le))
            seqs.append(insert_evolution(r, rdag, phi01, phi12, scenario))
    return seqs


def _phase_diff(fit_phases, injected, seq):
    """Max deviation after gauge-fixing both vectors the same way."""
    want = gauge_fix_phases(injected, seq)
    return max(abs(math.remainder(a - b, 2 * math.pi))
               for a, b in zip(fit_phases, want))


class TestFitPhaseAdvances:
    def test_gauge_direction_pattern(self):
        seq = _grid_sequences(n=4)[0]
        v = gauge_direction(seq)
        # free phases sit on gates [12, 01, 01, 12, 01]
        assert v.tolist() == [1.0, 0.0, 0.0, 1.0, 0.0]

    def test_recovery_from_exact_probabilities(self):
        rng = np.random.default_rng(17)
        seqs = _grid_sequences(n=60)
        injected = rng.uniform(-math.pi, math.pi, 5)
        inits = ("e", "mu", "tau")
        obs = np.array([
            [probabilities(apply_sequence(f, sequence_with_phase_vector(s, injected)))
             for s in seqs]
            for f in inits
        ])
        fit = fit_phase_advances(obs, seqs, inits)
        assert _phase_diff(fit.phases, injected, seqs[0]) < 1e-6

    def test_zero_phases_recovered(self):
        seqs = _grid_sequences(n=30)
        obs = np.array([probabilities(apply_sequence("mu", s)) for s in seqs])
        fit = fit_phase_advances(obs, seqs, "mu")
        assert np.abs(fit.phases).max() < 1e-6

    def test_recovery_from_sampled_counts(self):
        rng = np.random.default_rng(23)
        seqs = _grid_sequences(n=60)
        injected = np.array([0.9, -2.1, 0.4, 2.8, -0.6])
        inits = ("e", "mu", "tau")
        obs = np.zeros((3, len(seqs), 3))
        for rep in range(4):
            for f, flavor in enumerate(inits):
                for i, s in enumerate(seqs):
                    p = probabilities(apply_sequence(
                        flavor, sequence_with_phase_vector(s, injected)))
                    obs[f, i] += sample_counts(p, 8192, seed=rng).as_array()
        fit = fit_phase_advances(obs, seqs, inits)
        assert _phase_diff(fit.phases, injected, seqs[0]) < 0.05
        assert np.all(np.isfinite(fit.uncertainties))
        assert np.all(fit.uncertainties > 0)

    def test_consistency_with_frame_model(self):
        # likelihood fit on model-distorted data returns the model offsets
        seqs = _grid_sequences(n=60)
        inits = ("e", "mu", "tau")
        obs = np.array([
            [probabilities(apply_sequence(f, apply_phase_advances(s, MODEL)))
             for s in seqs]
            for f in inits
        ])
        fit = fit_phase_advances(obs, seqs, inits)
        want = MODEL.frame_offsets(seqs[0])[1:]
        assert _phase_diff(fit.phases, want, seqs[0]) < 1e-6

    def test_requires_enough_points(self):
        seqs = _grid_sequences(n=3)
        obs = np.array([probabilities(apply_sequence("mu", s)) for s in seqs])
        with pytest.raises(ValueError):
            fit_phase_advances(obs, seqs, "mu")


class TestGateErrors:
    def test_no_errors_identity(self):
        seq = vacuum_sequence(15000.0)
        exact = probabilities(apply_sequence("mu", seq))
        noisy = run_with_gate_errors("mu", seq, 0.0, 0.0)
        assert np.abs(noisy - exact).max() < 1e-12

    def test_coherent_error_signature(self):
        # repeated pi gates: P(|1>) follows (1 + cos(n(pi+eps)))/2
        eps = 0.008
        gate = GivensGate("12", 0.0, math.pi)
        for n in (1, 5, 20, 50):
            seq = GateSequence((gate,) * n)
            p = run_with_gate_errors("mu", seq, under_rotation=eps)
            want = (1 + math.cos(n * (math.pi + eps))) / 2
            assert p[1] == pytest.approx(want, abs=1e-10)

    def test_decay_only_monotone(self):
        q = depolarization_per_gate(73.125, 35.52)
        gate = GivensGate("12", 0.0, math.pi)
        values = []
        for n in (0, 2, 4, 8, 16, 32):
            seq = GateSequence((gate,) * n)
            p = run_with_gate_errors("mu", seq, 0.0, q)
            values.append(abs(p[1] - 1 / 3) + abs(p[2] - 1 / 3))
        assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))

    def test_depolarization_constant(self):
        q = depolarization_per_gate(73.125, 160 * 0.222)
        assert q == pytest.approx(0.016187496704003212, rel=1e-12)

    def test_invalid_depolarization(self):
        with pytest.raises(ValueError):
            run_with_gate_errors("mu", GateSequence(()), 0.0, 1.5)
