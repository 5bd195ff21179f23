import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from satentangle import quantum as q
from satentangle.estimators import (
    EstimatorError,
    SettingCounts,
    bootstrap_chsh,
    chsh,
    coincidence_rate_report,
    correlation,
    counts_from_records,
    fidelity_lower_bound,
    visibility,
    visibility_from_contrast,
)
from satentangle.timesync import COINC_DTYPE

BIG = 10**12


def exact_counts(state, a, b, sign=1, n=BIG):
    p = q.measurement_probabilities(state, q.AnalyzerSetting(a, 1), q.AnalyzerSetting(b, sign))
    return SettingCounts.from_array(a, b, np.rint(np.asarray(p) * n))


def chsh_exact(state, sign, angles=q.CHSH_ANGLES):
    return chsh([exact_counts(state, a, b, sign) for a, b in angles], angles)


def random_state(rng):
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = g @ g.conj().T
    return q.TwoQubitState(rho / np.trace(rho).real)


def test_correlation_examples():
    assert correlation(SettingCounts(0, 0, 10, 0, 0, 10)) == (1.0, 0.0)
    e, s = correlation(SettingCounts(0, 0, 5, 5, 5, 5))
    assert e == 0.0
    assert s == pytest.approx(1 / math.sqrt(20))
    assert s == pytest.approx(0.2236, abs=1e-4)


def test_correlation_needs_counts():
    with pytest.raises(EstimatorError):
        correlation(SettingCounts(0, 0))
    with pytest.raises(EstimatorError):
        SettingCounts(0, 0, -1)


@given(st.lists(st.integers(0, 500), min_size=4, max_size=4).filter(lambda c: sum(c) > 0), st.integers(1, 50))
def test_scaling_law(counts, k):
    base = SettingCounts.from_array(0, 0, counts)
    e, s = correlation(base)
    ek, sk = correlation(base.scaled(k))
    assert ek == pytest.approx(e, abs=1e-12)
    assert sk == pytest.approx(s / math.sqrt(k), rel=1e-9, abs=1e-15)


def test_ideal_state_reaches_tsirelson():
    sign = q.calibrate_handedness()
    assert chsh_exact(q.psi_plus(), sign).S == pytest.approx(2 * math.sqrt(2), abs=1e-6)


def test_werner_chsh():
    r = chsh_exact(q.make_werner(0.869), q.calibrate_handedness())
    assert r.S == pytest.approx(2 * math.sqrt(2) * (4 * 0.869 - 1) / 3, abs=1e-6)
    assert r.S == pytest.approx(2.334, abs=1e-3)


def test_chsh_fields_and_missing_setting():
    settings = [SettingCounts(a, b, 40, 10, 10, 40) for a, b in q.CHSH_ANGLES]
    r = chsh(settings)
    assert r.S == pytest.approx(1.2)
    assert r.sigma_S == pytest.approx(2 * correlation(settings[0])[1])
    assert r.violation_sigmas == pytest.approx((r.S - 2) / r.sigma_S)
    with pytest.raises(EstimatorError, match="missing setting"):
        chsh(settings[:3])


def test_estimator_respects_tsirelson():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        state = random_state(rng)
        a, a2, b, b2 = rng.uniform(0, math.pi, 4)
        angles = ((a, b), (a, b2), (a2, b), (a2, b2))
        sign = int(rng.choice([-1, 1]))
        assert chsh_exact(state, sign, angles).S <= 2 * math.sqrt(2) + 1e-9


def test_visibility_examples():
    assert visibility_from_contrast(16) == pytest.approx(15 / 17, abs=1e-12)
    assert visibility_from_contrast(16) == pytest.approx(0.882, abs=1e-3)
    assert visibility(SettingCounts(0, 0, 16, 1, 1, 16)) == pytest.approx(15 / 17, abs=1e-12)
    assert visibility(SettingCounts(0, 0, 7, 0, 0, 3)) == 1.0
    assert visibility(SettingCounts(0, 0, 4, 4, 4, 4)) == 0.0


def fidelity_exact(state):
    return fidelity_lower_bound(exact_counts(state, 0, 0), exact_counts(state, math.pi / 4, math.pi / 4))[0]


def test_fidelity_bound_ideal_and_werner():
    assert fidelity_exact(q.psi_plus()) == pytest.approx(1.0, abs=1e-9)
    for p in np.linspace(0, 1, 21):
        state = q.make_werner((1 + 3 * p) / 4)
        assert fidelity_exact(state) == pytest.approx(p, abs=1e-9)
        assert fidelity_exact(state) <= q.exact_fidelity(state) + 1e-9


def test_fidelity_bound_is_valid_for_random_states():
    rng = np.random.default_rng(12)
    for _ in range(500):
        state = random_state(rng)
        assert fidelity_exact(state) <= q.exact_fidelity(state) + 1e-9
    for p in np.linspace(0.5, 1, 11):
        u = q.rotation(rng.uniform(-0.3, 0.3))
        state = q.apply_local_unitaries(q.make_werner(p), u, np.eye(2))
        assert fidelity_exact(state) <= q.exact_fidelity(state) + 1e-9


def test_fidelity_sigma_by_finite_differences():
    hv = SettingCounts(0, 0, 3, 60, 58, 4)
    diag = SettingCounts(math.pi / 4, math.pi / 4, 30, 2, 3, 28)
    f, sig = fidelity_lower_bound(hv, diag)
    grads = []
    for which, base in ((0, hv), (1, diag)):
        n = base.counts
        for k in range(4):
            up = n.copy()
            up[k] += 1e-4
            dn = n.copy()
            dn[k] -= 1e-4

            def ev(c):
                # SettingCounts holds integers, so evaluate the formula on floats
                h = c if which == 0 else hv.counts
                d = c if which == 1 else diag.counts
                tot = h.sum()
                ex = (d[0] + d[3] - d[1] - d[2]) / d.sum()
                return (h[1] + h[2]) / (2 * tot) + ex / 2 - math.sqrt(h[0] * h[3]) / tot

            grads.append((ev(up) - ev(dn)) / 2e-4 * math.sqrt(n[k]))
    assert sig == pytest.approx(math.sqrt(sum(g * g for g in grads)), rel=1e-6)
    assert f == pytest.approx((118 / 125) / 2 + 0.5 * (53 / 63) - math.sqrt(12) / 125)


def test_fidelity_needs_both_bases():
    with pytest.raises(EstimatorError):
        fidelity_lower_bound(SettingCounts(0, 0), SettingCounts(1, 1, 1, 1, 1, 1))


def records(rows):
    rec = np.zeros(len(rows), dtype=COINC_DTYPE)
    for k, (b1, b2, o1, o2) in enumerate(rows):
        rec[k]["basis1"], rec[k]["basis2"], rec[k]["outcome1"], rec[k]["outcome2"] = b1, b2, o1, o2
    return rec


def test_counts_from_records_and_exclusions():
    rec = records([(0, 0, 1, 1), (0, 1, 1, -1), (1, 1, -1, -1), (2, 0, 1, 1), (0, 3, -1, 1)])
    settings, excluded = counts_from_records(rec, [0.0, 0.5], [0.1, 0.6])
    assert excluded == 2
    by = {(s.angle1, s.angle2): s for s in settings}
    assert by[(0.0, 0.1)].n_pp == 1
    assert by[(0.0, 0.6)].n_pm == 1
    assert by[(0.5, 0.6)].n_mm == 1
    assert sum(s.total for s in settings) == 3


def test_rate_report_examples():
    assert coincidence_rate_report(np.zeros(134, COINC_DTYPE), 250.0)["rate_hz"] == pytest.approx(0.536)
    assert coincidence_rate_report(np.zeros(1167, COINC_DTYPE), 1059.0)["rate_hz"] == pytest.approx(1.102, abs=5e-4)
    assert coincidence_rate_report(np.zeros(0, COINC_DTYPE), 10.0)["rate_hz"] == 0.0
    with pytest.raises(EstimatorError):
        coincidence_rate_report(np.zeros(0, COINC_DTYPE), 0.0)


def test_rate_report_per_setting():
    rec = records([(0, 0, 1, 1), (0, 0, 1, -1), (1, 1, 1, 1), (5, 0, 1, 1)])
    rep = coincidence_rate_report(rec, 2.0, [0.0, 1.0], [0.0, 1.0])
    counts = {tuple(d["angles"]): d["count"] for d in rep["per_setting"]}
    assert counts[(0.0, 0.0)] == 2 and counts[(1.0, 1.0)] == 1
    assert rep["excluded"] == 1


def test_reruns_are_bit_identical():
    rng = np.random.default_rng(3)
    rows = [(rng.integers(2), rng.integers(2), rng.choice([-1, 1]), rng.choice([-1, 1])) for _ in range(400)]
    rec = records(rows)
    a1, a2 = [0.0, math.pi / 4], [math.pi / 8, 3 * math.pi / 8]
    r1 = chsh(counts_from_records(rec, a1, a2)[0]).to_dict()
    r2 = chsh(counts_from_records(rec.copy(), a1, a2)[0]).to_dict()
    assert r1 == r2


def test_bootstrap_agrees_with_propagation():
    rng = np.random.default_rng(5)
    state = q.make_werner(0.869)
    sign = q.calibrate_handedness()
    rows = []
    for i, (a, b) in enumerate(q.CHSH_ANGLES):
        p = q.measurement_probabilities(state, q.AnalyzerSetting(a, 1), q.AnalyzerSetting(b, sign))
        for k in rng.choice(4, size=300, p=p):
            rows.append((i // 2, i % 2, 1 if k < 2 else -1, 1 if k % 2 == 0 else -1))
    rec = records(rows)
    a1, a2 = [0.0, math.pi / 4], [math.pi / 8, 3 * math.pi / 8]
    prop = chsh(counts_from_records(rec, a1, a2)[0]).sigma_S
    boot = bootstrap_chsh(rec, a1, a2, 400, np.random.default_rng(9))
    assert boot == pytest.approx(prop, rel=0.2)
    with pytest.raises(EstimatorError):
        bootstrap_chsh(rec[:0], a1, a2, 10, rng)
