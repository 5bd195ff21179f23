import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import unitary_group

from satentangle import quantum as q
from satentangle.quantum import AnalyzerSetting, StateError, TwoQubitState, WaveplateSetting

ANGLE = st.floats(0.0, math.pi, exclude_max=True)


def random_state(rng, rank=4):
    g = rng.normal(size=(4, rank)) + 1j * rng.normal(size=(4, rank))
    rho = g @ g.conj().T
    return TwoQubitState(rho / np.trace(rho).real)


def check_invariants(state):
    rho = state.rho
    assert np.max(np.abs(rho - rho.conj().T)) <= 1e-12
    assert abs(np.trace(rho) - 1) <= 1e-12
    assert np.linalg.eigvalsh(rho).min() >= -1e-10


def tensor_oracle(state, a, b):
    # independent Born rule: project each qubit separately, then combine
    def proj(angle, plus):
        v = np.array([math.cos(angle), math.sin(angle)]) if plus else np.array([-math.sin(angle), math.cos(angle)])
        return np.outer(v, v)

    out = []
    for pa, pb in ((True, True), (True, False), (False, True), (False, False)):
        out.append(np.real(np.trace(np.kron(proj(a, pa), proj(b, pb)) @ state.rho)))
    return np.array(out)


def test_werner_endpoints():
    assert np.allclose(q.make_werner(1.0).rho, np.outer(q.PSI_PLUS, q.PSI_PLUS.conj()))
    assert np.allclose(q.make_werner(0.25).rho, np.eye(4) / 4)


def test_werner_0907_diagonal():
    rho = q.make_werner(0.907).rho
    p = (4 * 0.907 - 1) / 3
    assert p == pytest.approx(0.876, abs=1e-12)
    assert np.real(np.diag(rho)) == pytest.approx([0.031, 0.469, 0.469, 0.031], abs=1e-12)


def test_werner_rejects_out_of_range():
    with pytest.raises(StateError):
        q.make_werner(0.2)
    with pytest.raises(StateError):
        q.make_colored(0.4)


@pytest.mark.parametrize("f", np.linspace(0.25, 1.0, 13))
def test_werner_fidelity_round_trip(f):
    assert q.exact_fidelity(q.make_werner(f)) == pytest.approx(f, abs=1e-12)


@pytest.mark.parametrize("f", np.linspace(0.5, 1.0, 6))
def test_colored_fidelity_round_trip(f):
    assert q.exact_fidelity(q.make_colored(f)) == pytest.approx(f, abs=1e-12)


def test_fidelity_trivial_cases():
    assert q.exact_fidelity(q.psi_plus()) == pytest.approx(1.0)
    assert q.exact_fidelity(TwoQubitState(np.eye(4) / 4)) == pytest.approx(0.25)


def test_state_validation():
    with pytest.raises(StateError):
        TwoQubitState(np.eye(4))
    with pytest.raises(StateError):
        TwoQubitState(np.diag([1.5, -0.5, 0, 0]))
    bad = np.eye(4) / 4
    bad = bad.astype(complex)
    bad[0, 1] = 0.1j
    with pytest.raises(StateError):
        TwoQubitState(bad)
    with pytest.raises(StateError):
        TwoQubitState(np.eye(2) / 2)


def test_state_is_read_only():
    s = q.psi_plus()
    with pytest.raises(ValueError):
        s.rho[0, 0] = 1.0


def test_identity_unitaries_leave_state():
    s = q.make_werner(0.9)
    assert np.allclose(q.apply_local_unitaries(s, q.I2, q.I2).rho, s.rho, atol=1e-15)


def test_non_unitary_rejected():
    with pytest.raises(StateError):
        q.apply_local_unitaries(q.psi_plus(), np.eye(2) * 2, q.I2)


def test_invariants_after_many_random_channels():
    rng = np.random.default_rng(7)
    s = q.make_werner(0.9)
    for k in range(1000):
        u1 = unitary_group.rvs(2, random_state=rng)
        u2 = unitary_group.rvs(2, random_state=rng)
        s = q.apply_local_unitaries(s, u1, u2)
        if k % 10 == 0:
            s = q.dephase(s, rng.uniform(0.9, 1.0))
        check_invariants(s)


def test_waveplates_at_zero_are_diagonal():
    u = q.waveplate_unitary(WaveplateSetting(0.0, 0.0, 0.0))
    assert abs(u[0, 1]) < 1e-15 and abs(u[1, 0]) < 1e-15
    assert abs(u[0, 0]) == pytest.approx(1.0)


@pytest.mark.parametrize("theta", np.linspace(0.0, math.pi, 7, endpoint=False))
def test_half_wave_plate_rotates(theta):
    u = q.waveplate_unitary(WaveplateSetting(0.0, theta / 2, 0.0))
    h = np.array([1.0, 0.0])
    v = np.array([0.0, 1.0])
    assert abs(v @ u @ h) ** 2 == pytest.approx(math.sin(theta) ** 2, abs=1e-12)


def test_waveplate_angle_validation():
    with pytest.raises(ValueError):
        WaveplateSetting(math.pi, 0.0, 0.0)


def test_compensation_identity_and_rotation():
    s = q.solve_compensation(q.I2)
    assert q.phase_distance(q.waveplate_unitary(s)) <= 1e-6
    rot = q.rotation(math.radians(17))
    s = q.solve_compensation(rot)
    assert q.phase_distance(q.waveplate_unitary(s) @ rot) <= 1e-6


def test_compensation_haar_channels():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        u = unitary_group.rvs(2, random_state=rng)
        s = q.solve_compensation(u)
        worst = max(worst, q.phase_distance(q.waveplate_unitary(s) @ u))
    assert worst <= 1e-6


@given(ANGLE, ANGLE, ANGLE)
def test_compensation_round_trip(a, b, c):
    u = q.waveplate_unitary(WaveplateSetting(a, b, c))
    s = q.solve_compensation(u)
    assert q.phase_distance(q.waveplate_unitary(s) @ u) <= 1e-6


def test_compensation_budget_error():
    # a single start from a poor point cannot reach the tolerance
    with pytest.raises(q.CompensationError) as info:
        q.solve_compensation(q.rotation(0.3), tol=1e-30, max_starts=1)
    assert info.value.residual >= 0


def test_compensation_rejects_non_unitary():
    with pytest.raises(StateError):
        q.solve_compensation(np.eye(2) * 0.5)


def test_residual_from_contrast():
    assert q.residual_from_contrast(math.inf) == 0.0
    assert q.residual_from_contrast(80) == pytest.approx(0.1114, abs=1e-4)
    assert math.degrees(q.residual_from_contrast(80)) == pytest.approx(6.38, abs=0.01)
    assert q.residual_from_contrast(1) == pytest.approx(math.pi / 4)
    assert math.tan(q.residual_from_contrast(80)) ** 2 == pytest.approx(1 / 80)


def test_coherence_from_contrast():
    assert q.coherence_from_contrast(16) == pytest.approx(15 / 17)
    assert q.coherence_from_contrast(math.inf) == 1.0


def test_psi_plus_hv_probabilities():
    p = q.measurement_probabilities(q.psi_plus(), AnalyzerSetting(0.0), AnalyzerSetting(0.0))
    assert p == pytest.approx([0.0, 0.5, 0.5, 0.0], abs=1e-15)


def test_werner_hv_probabilities():
    p = q.measurement_probabilities(q.make_werner(0.907), AnalyzerSetting(0.0), AnalyzerSetting(0.0))
    assert p[0] == pytest.approx(0.031, abs=1e-12)
    assert p[3] == pytest.approx(0.031, abs=1e-12)


@pytest.mark.parametrize("sign", [1, -1])
def test_psi_plus_correlator_law(sign):
    grid = np.linspace(0, math.pi, 20, endpoint=False)
    for a in grid:
        for b in grid:
            p = q.measurement_probabilities(q.psi_plus(), AnalyzerSetting(a), AnalyzerSetting(b, sign))
            assert q.correlator(p) == pytest.approx(-math.cos(2 * (a + sign * b)), abs=1e-12)


def test_probabilities_match_tensor_oracle():
    rng = np.random.default_rng(3)
    grid = np.linspace(0, math.pi, 20, endpoint=False)
    for _ in range(5):
        s = random_state(rng)
        for a in grid:
            b = grid[(int(a * 7)) % 20]
            p = q.measurement_probabilities(s, AnalyzerSetting(a), AnalyzerSetting(b))
            assert p == pytest.approx(tensor_oracle(s, a, b), abs=1e-10)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)


def test_psi_plus_equal_angles_anticorrelated():
    for a in np.linspace(0, math.pi, 20, endpoint=False):
        p = q.measurement_probabilities(q.psi_plus(), AnalyzerSetting(a), AnalyzerSetting(a, -1))
        assert p[0] == pytest.approx(0.0, abs=1e-12) and p[3] == pytest.approx(0.0, abs=1e-12)


def test_handedness_calibration():
    assert q.calibrate_handedness() == -1
    assert q.ideal_chsh(q.psi_plus(), -1) == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert q.ideal_chsh(q.psi_plus(), 1) == pytest.approx(0.0, abs=1e-12)


def test_tsirelson_over_random_states_and_settings():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        s = random_state(rng, rank=int(rng.integers(1, 5)))
        angles = [tuple(rng.uniform(0, math.pi, 2)) for _ in range(4)]
        es = [q.correlator(q.measurement_probabilities(s, AnalyzerSetting(a), AnalyzerSetting(b))) for a, b in angles]
        assert all(abs(e) <= 1 + 1e-12 for e in es)
        assert abs(es[0] - es[1] + es[2] + es[3]) <= 2 * math.sqrt(2) + 1e-9


def test_onboard_sampling_rate():
    assert q.onboard_sampling_rate(q.SourceParams()) == pytest.approx(590.0)
    assert q.onboard_sampling_rate(q.SourceParams(100.0, 0.9, 1.0)) == pytest.approx(100.0)
    assert q.onboard_sampling_rate(q.SourceParams(100.0, 0.9, 0.1)) == pytest.approx(1.0)


def test_dephasing_keeps_populations():
    s = q.dephase(q.psi_plus(), 0.5)
    assert np.real(np.diag(s.rho)) == pytest.approx([0, 0.5, 0.5, 0])
    # the HV/VH coherence flips both qubits, so it scales by c**2
    assert q.exact_fidelity(s) == pytest.approx((1 + 0.5**2) / 2)
    with pytest.raises(StateError):
        q.dephase(s, 1.5)
