import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from nuqutrit.pmns import (
    NUFIT_PARAMS,
    RAD_PER_EV2_KM_PER_GEV,
    Baseline,
    OscillationParams,
    build_hamiltonian,
    build_pmns,
    evolution_operator,
    evolution_phases,
    exact_matter_oracle,
    effective_params,
    is_hermitian,
    is_unitary,
    mass_matrix_ev2,
    matter_effective_params,
    oscillation_probabilities,
    oscillation_probability,
    params_from_json,
    params_to_json,
    pmns_factors,
)

# frozen oracle values (computed by direct evaluation, see test bodies)
S13_NUFIT = 0.14988047541347393
DM2_EE_NUFIT = 0.0024874557070259924
L_OVER_E_FULL_PERIOD = 33418.99207792508
P_MUE_CP_MINUS_HALFPI = 0.05277058644220367

angles = st.floats(0.0, math.pi / 2)
deltas = st.floats(-math.pi, math.pi)
dm21s = st.floats(1e-6, 1e-3)
dm31s = st.floats(5e-4, 5e-3)


def random_params(rng):
    return OscillationParams(
        theta12=rng.uniform(0, math.pi / 2),
        theta23=rng.uniform(0, math.pi / 2),
        theta13=rng.uniform(0, math.pi / 2),
        delta=rng.uniform(-math.pi, math.pi),
        dm2_21=rng.uniform(1e-6, 1e-3),
        dm2_31=rng.uniform(5e-4, 5e-3),
    )


def eq12_oracle(u, dm2s, l_over_e, a, b):
    """Independent incoherent-sum evaluation of the detection probability."""
    phases = np.exp(-1j * RAD_PER_EV2_KM_PER_GEV * np.asarray(dm2s) * l_over_e)
    amp = np.sum(np.conj(u[a, :]) * u[b, :] * phases)
    return abs(amp) ** 2


class TestBuildPmns:
    def test_nufit_ue3_magnitude(self):
        u = build_pmns(NUFIT_PARAMS)
        assert abs(u[0, 2]) == pytest.approx(S13_NUFIT, abs=1e-12)
        assert abs(abs(u[0, 2]) - math.sin(math.radians(8.62))) < 1e-12

    def test_zero_angles_identity(self):
        p = OscillationParams(0.0, 0.0, 0.0, 0.0, 7.42e-5, 2.51e-3)
        assert np.abs(build_pmns(p) - np.eye(3)).max() < 1e-15

    def test_ue3_carries_cp_phase(self):
        p = NUFIT_PARAMS.with_delta(0.7)
        u = build_pmns(p)
        assert u[0, 2] == pytest.approx(S13_NUFIT * np.exp(-0.7j), abs=1e-12)

    def test_row_norms(self):
        u = build_pmns(NUFIT_PARAMS)
        assert np.abs(np.linalg.norm(u, axis=1) - 1.0).max() < 1e-12

    def test_unitarity_1000_draws(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            u = build_pmns(random_params(rng))
            assert np.abs(u.conj().T @ u - np.eye(3)).max() < 1e-12

    @settings(max_examples=60, deadline=None)
    @given(t12=angles, t23=angles, t13=angles, d=deltas)
    def test_factorization(self, t12, t23, t13, d):
        p = OscillationParams(t12, t23, t13, d, 7.42e-5, 2.51e-3)
        m23, m13, m12 = pmns_factors(p)
        assert np.abs(m23 @ m13 @ m12 - build_pmns(p)).max() < 1e-12


class TestHamiltonian:
    def test_vacuum_eigenvalues(self):
        m = mass_matrix_ev2(NUFIT_PARAMS, vm=0.0)
        ev = np.linalg.eigvalsh(m)
        expected = np.sort([0.0, NUFIT_PARAMS.dm2_21, NUFIT_PARAMS.dm2_31])
        assert np.abs(ev - expected).max() < 1e-10

    def test_zero_angles_diagonal(self):
        p = OscillationParams(0.0, 0.0, 0.0, 0.0, 7.42e-5, 2.51e-3)
        h = build_hamiltonian(p, vm=0.0, energy_gev=1.0)
        assert np.abs(h - np.diag(np.diag(h))).max() < 1e-18

    def test_trace(self):
        vm = 1e-4
        m = mass_matrix_ev2(NUFIT_PARAMS, vm=vm)
        expected = NUFIT_PARAMS.dm2_21 + NUFIT_PARAMS.dm2_31 + vm
        assert np.trace(m).real == pytest.approx(expected, abs=1e-15)

    def test_hermitian(self):
        assert is_hermitian(build_hamiltonian(NUFIT_PARAMS, 1e-4, 1.0))

    def test_nonpositive_energy(self):
        with pytest.raises(ValueError):
            build_hamiltonian(NUFIT_PARAMS, 0.0, 0.0)
        with pytest.raises(ValueError):
            build_hamiltonian(NUFIT_PARAMS, 0.0, -1.0)


class TestMatterParams:
    def test_vacuum_limit_exact(self):
        mp = matter_effective_params(NUFIT_PARAMS, 0.0)
        assert mp.theta12_hat == pytest.approx(NUFIT_PARAMS.theta12, abs=1e-12)
        assert mp.theta13_hat == pytest.approx(NUFIT_PARAMS.theta13, abs=1e-12)
        assert mp.theta23_hat == NUFIT_PARAMS.theta23
        assert mp.dm2_21_hat == pytest.approx(NUFIT_PARAMS.dm2_21, rel=1e-12)
        assert mp.dm2_31_hat == pytest.approx(NUFIT_PARAMS.dm2_31, rel=1e-12)
        assert mp.a12 == pytest.approx(0.0, abs=1e-18)

    def test_dm2_ee_value(self):
        mp = matter_effective_params(NUFIT_PARAMS, 0.0)
        c12sq = math.cos(NUFIT_PARAMS.theta12) ** 2
        direct = c12sq * NUFIT_PARAMS.dm2_31 + (1 - c12sq) * NUFIT_PARAMS.dm2_32
        assert mp.dm2_ee == pytest.approx(direct, rel=1e-14)
        assert mp.dm2_ee == pytest.approx(DM2_EE_NUFIT, rel=1e-12)

    def test_zero_potential_continuity(self):
        a = matter_effective_params(NUFIT_PARAMS, 0.0)
        b = matter_effective_params(NUFIT_PARAMS, 1e-12)
        for field in ("theta12_hat", "theta13_hat", "theta23_hat",
                      "dm2_21_hat", "dm2_31_hat", "dm2_ee_hat", "a12"):
            x, y = getattr(a, field), getattr(b, field)
            assert abs(x - y) <= 1e-6 * max(1.0, abs(x))

    def test_range_enforced(self):
        with pytest.raises(ValueError):
            matter_effective_params(NUFIT_PARAMS, -1e-6)
        with pytest.raises(ValueError):
            matter_effective_params(NUFIT_PARAMS, 2e-2)
        matter_effective_params(NUFIT_PARAMS, 1e-2)  # boundary accepted

    def test_matches_exact_oracle_at_1e3(self):
        vm = 1e-3
        worst = 0.0
        for le in np.linspace(0.0, 2000.0, 80):
            bl = Baseline(l_over_e=le)
            for beta in range(3):
                dmp = oscillation_probability(NUFIT_PARAMS, "mu", beta, bl, vm)
                exact = exact_matter_oracle(NUFIT_PARAMS, "mu", beta, bl, vm)
                worst = max(worst, abs(dmp - exact))
        assert worst < 2e-3


class TestEvolution:
    def test_zero_baseline(self):
        assert evolution_phases(NUFIT_PARAMS, Baseline(l_over_e=0.0)) == (0.0, 0.0)

    def test_full_period_l_over_e(self):
        le = 2.0 * math.pi / (RAD_PER_EV2_KM_PER_GEV * NUFIT_PARAMS.dm2_21)
        assert le == pytest.approx(L_OVER_E_FULL_PERIOD, rel=1e-12)
        phi01, _ = evolution_phases(NUFIT_PARAMS, Baseline(l_over_e=le))
        assert phi01 == pytest.approx(-2.0 * math.pi, rel=1e-12)

    def test_linearity(self):
        a = evolution_phases(NUFIT_PARAMS, Baseline(length_km=500.0, energy_gev=1.0))
        b = evolution_phases(NUFIT_PARAMS, Baseline(length_km=1000.0, energy_gev=1.0))
        assert b[0] == pytest.approx(2 * a[0], rel=1e-12)
        assert b[1] == pytest.approx(2 * a[1], rel=1e-12)

    def test_matter_params_use_hatted_splittings(self):
        mp = matter_effective_params(NUFIT_PARAMS, 1e-3)
        phi01, phi12 = evolution_phases(mp, Baseline(l_over_e=1000.0))
        assert phi01 == pytest.approx(
            -RAD_PER_EV2_KM_PER_GEV * mp.dm2_21_hat * 1000.0, rel=1e-12)
        assert phi12 == pytest.approx(
            -RAD_PER_EV2_KM_PER_GEV * mp.dm2_32_hat * 1000.0, rel=1e-12)

    def test_identity_at_zero(self):
        u = evolution_operator(NUFIT_PARAMS, Baseline(l_over_e=0.0))
        assert np.abs(u - np.eye(3)).max() < 1e-14

    def test_unitary_random(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p = random_params(rng)
            u = evolution_operator(p, Baseline(l_over_e=rng.uniform(0, 4e4)))
            assert is_unitary(u)

    def test_matches_matrix_exponential(self):
        bl = Baseline(length_km=295.0, energy_gev=0.7)
        h = build_hamiltonian(NUFIT_PARAMS, 0.0, 0.7)  # eV^2/GeV
        # phase units: 2E H L/(2E) * conversion = closed-form diagonal phases
        arg = -1j * RAD_PER_EV2_KM_PER_GEV * 2.0 * 0.7 * h * bl.ratio
        u_exp = expm(arg)
        u_closed = evolution_operator(NUFIT_PARAMS, bl)
        # strip the global phase of the lightest state convention
        assert np.abs(u_exp - u_closed).max() < 1e-10


class TestProbability:
    def test_zero_baseline_delta(self):
        bl = Baseline(l_over_e=0.0)
        for a in range(3):
            p = oscillation_probabilities(NUFIT_PARAMS, a, bl)
            expect = np.zeros(3)
            expect[a] = 1.0
            assert np.abs(p - expect).max() < 1e-14

    def test_t_symmetry_real_mixing(self):
        bl = Baseline(length_km=810.0, energy_gev=2.0)
        assert oscillation_probability(NUFIT_PARAMS, "mu", "e", bl) == pytest.approx(
            oscillation_probability(NUFIT_PARAMS, "e", "mu", bl), abs=1e-12)

    def test_cp_point_against_independent_oracle(self):
        p = NUFIT_PARAMS.with_delta(-math.pi / 2)
        bl = Baseline(length_km=295.0, energy_gev=0.6)
        got = oscillation_probability(p, "mu", "e", bl)
        u = build_pmns(p)
        want = eq12_oracle(u, [0.0, p.dm2_21, p.dm2_31], bl.ratio, 1, 0)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(P_MUE_CP_MINUS_HALFPI, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(t12=angles, t23=angles, t13=angles, d=deltas,
           le=st.floats(0.0, 4e4))
    def test_conservation(self, t12, t23, t13, d, le):
        p = OscillationParams(t12, t23, t13, d, 7.42e-5, 2.51e-3)
        probs = oscillation_probabilities(p, "mu", Baseline(l_over_e=le))
        assert abs(probs.sum() - 1.0) < 1e-12

    def test_conservation_in_matter(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            p = random_params(rng)
            vm = rng.uniform(0, 1e-3)
            probs = oscillation_probabilities(p, "e", Baseline(l_over_e=rng.uniform(0, 4e4)), vm)
            assert abs(probs.sum() - 1.0) < 1e-12

    @settings(max_examples=40, deadline=None)
    @given(d=deltas, le=st.floats(10.0, 4e4))
    def test_cp_conjugation(self, d, le):
        bl = Baseline(l_over_e=le)
        p_fwd = oscillation_probability(NUFIT_PARAMS.with_delta(d), "mu", "e", bl)
        p_rev = oscillation_probability(NUFIT_PARAMS.with_delta(-d), "e", "mu", bl)
        assert p_fwd == pytest.approx(p_rev, abs=1e-12)

    def test_global_phase_convention_independence(self):
        # shifting all mass-squareds by a constant leaves probabilities alone
        bl = Baseline(l_over_e=7000.0)
        u = build_pmns(NUFIT_PARAMS)
        base = eq12_oracle(u, [0.0, 7.42e-5, 2.51e-3], bl.ratio, 1, 0)
        shifted = eq12_oracle(u, [1e-4, 7.42e-5 + 1e-4, 2.51e-3 + 1e-4], bl.ratio, 1, 0)
        assert base == pytest.approx(shifted, abs=1e-12)


class TestExactOracle:
    def test_vacuum_agreement(self):
        bl = Baseline(length_km=1000.0, energy_gev=1.0)
        for a in range(3):
            for b in range(3):
                exact = exact_matter_oracle(NUFIT_PARAMS, a, b, bl, 0.0)
                closed = oscillation_probability(NUFIT_PARAMS, a, b, bl)
                assert abs(exact - closed) < 1e-10

    def test_conservation_any_vm(self):
        bl = Baseline(l_over_e=5000.0)
        for vm in (0.0, 1e-5, 1e-4, 1e-3):
            total = sum(exact_matter_oracle(NUFIT_PARAMS, "mu", b, bl, vm)
                        for b in range(3))
            assert abs(total - 1.0) < 1e-12


class TestEffectiveParams:
    def test_identity_at_zero(self):
        assert effective_params(NUFIT_PARAMS, 0.0) is NUFIT_PARAMS

    def test_delta_preserved(self):
        p = NUFIT_PARAMS.with_delta(1.0)
        assert effective_params(p, 1e-4).delta == 1.0


class TestParamsIO:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "params.json"
        p = OscillationParams(0.5, 0.7, 0.15, -1.2, 8e-5, 2.4e-3)
        params_to_json(p, path)
        q = params_from_json(path)
        assert q.theta12 == pytest.approx(p.theta12, rel=1e-15)
        assert q.delta == pytest.approx(p.delta, rel=1e-15)
        assert q.dm2_31 == p.dm2_31

    def test_defaults_fill_missing(self, tmp_path):
        path = tmp_path / "partial.json"
        path.write_text(json.dumps({"delta_deg": -90.0}))
        p = params_from_json(path)
        assert p.delta == pytest.approx(-math.pi / 2)
        assert p.theta12 == NUFIT_PARAMS.theta12

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"theta12": 33.45}))
        with pytest.raises(ValueError):
            params_from_json(path)


class TestValidation:
    def test_baseline_requires_energy(self):
        with pytest.raises(ValueError):
            Baseline(length_km=295.0)
        with pytest.raises(ValueError):
            Baseline(length_km=295.0, energy_gev=0.0)
        with pytest.raises(ValueError):
            Baseline(length_km=-1.0, energy_gev=1.0)

    def test_params_require_finite(self):
        with pytest.raises(ValueError):
            OscillationParams(math.nan, 0.7, 0.15, 0.0, 7e-5, 2.5e-3)
        with pytest.raises(ValueError):
            OscillationParams(0.5, 0.7, 0.15, 0.0, -7e-5, 2.5e-3)
