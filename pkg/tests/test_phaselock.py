import math

import numpy as np
import pytest

from scsqkd.errors import EmptyMatrix
from scsqkd.phaselock import (
    CountingMatrix,
    DriftModel,
    FrameTiming,
    InterferenceModel,
    PhaseLockState,
    circular_voltage_distance,
    detector_counts,
    estimate_v0,
    parse_pattern,
    qber_trace,
    run_feedback,
    two_phase_scan,
    write_trace_csv,
    zero_phase_voltage,
)

CLEAN = InterferenceModel(Cd=0.0)


def test_frame_timing():
    t = FrameTiming()
    assert t.frame_s == pytest.approx(40e-6)
    assert t.duty_cycle == pytest.approx(0.5)
    assert t.slots(20.0) == 25_000
    with pytest.raises(ValueError):
        FrameTiming(reference_us=10.0)


def test_detector_counts_are_complementary():
    m = InterferenceModel()
    left, right = detector_counts(0.0, m)
    assert left == pytest.approx(m.peak)
    assert right == pytest.approx(m.Cd)
    left, right = detector_counts(1.0, m)
    assert left + right == pytest.approx(2 * m.C0 + 2 * m.Cd)


@pytest.mark.parametrize("seed", range(5))
def test_noiseless_inversion(seed):
    rng = np.random.default_rng(seed)
    for _ in range(50):
        phi = rng.uniform(-math.pi, math.pi)
        v_now = rng.uniform(-8.0, 8.0)
        state = PhaseLockState(phi_true=phi, V_current=v_now)
        m = two_phase_scan(state, CLEAN, noisy=False)
        v0 = estimate_v0(m, v_now, CLEAN.V_pi)
        assert circular_voltage_distance(v0, zero_phase_voltage(phi, CLEAN.V_pi), CLEAN.V_pi) <= 1e-9


def test_estimate_empty_row():
    with pytest.raises(EmptyMatrix):
        estimate_v0(CountingMatrix(0.0, 0.0, 1.0, 1.0), 0.0, 4.0)


def test_circular_distance():
    assert circular_voltage_distance(0.1, 7.9, 4.0) == pytest.approx(0.2)
    assert circular_voltage_distance(-4.0, 4.0, 4.0) == pytest.approx(0.0)


def test_parse_pattern():
    assert parse_pattern("on:60,off:60") == [(True, 60.0), (False, 60.0)]
    assert parse_pattern(" ON:1.5 ") == [(True, 1.5)]
    for bad in ("", "on", "maybe:3", "on:-1", "on:x", "on:inf"):
        with pytest.raises(ValueError):
            parse_pattern(bad)


def test_feedback_on_holds_counts(backend):
    trace = run_feedback(4.0, drift=DriftModel(seed=1))
    assert len(trace) == 40
    assert np.std(trace.phi_residual) < 0.1
    assert trace.visibility() > 0.99
    assert abs(np.mean(trace.counts) - 90_000) < 1_000


def test_feedback_off_drifts(backend):
    trace = run_feedback(5.0, drift=DriftModel(sigma_rad_per_sqrt_s=2.0, seed=2), enabled=False)
    spread = (trace.counts.max() - trace.counts.min()) / (2 * InterferenceModel().C0)
    assert spread > 0.5
    assert np.all(trace.v_applied == 0.0)
    assert math.isnan(trace.visibility())


def test_pattern_toggles_loop():
    trace = run_feedback(4.0, drift=DriftModel(seed=3), enabled=[(True, 2.0), (False, 2.0)])
    assert trace.enabled[:19].all() and not trace.enabled[21:].any()
    frozen = trace.v_applied[21:]
    assert np.all(frozen == frozen[0])


def test_voltage_stays_in_range():
    m = InterferenceModel()
    trace = run_feedback(30.0, model=m, drift=DriftModel(sigma_rad_per_sqrt_s=5.0, seed=4))
    assert trace.v_applied.min() >= m.v_range[0]
    assert trace.v_applied.max() <= m.v_range[1]


def test_deterministic_per_seed():
    a = run_feedback(2.0, drift=DriftModel(seed=5))
    b = run_feedback(2.0, drift=DriftModel(seed=5))
    np.testing.assert_array_equal(a.counts, b.counts)


def test_zero_duration_and_limits():
    assert len(run_feedback(0.0)) == 0
    with pytest.raises(ValueError):
        run_feedback(4000.0)


def test_qber_trace_mean_and_drift_dependence():
    t, q = qber_trace(60.0, seed=0)
    assert len(t) == 6 and t[-1] == pytest.approx(60.0)
    assert q.mean() == pytest.approx(0.036, abs=0.001)
    calm = qber_trace(20.0, drift=DriftModel(sigma_rad_per_sqrt_s=5.0), seed=1)[1].mean()
    rough = qber_trace(20.0, drift=DriftModel(sigma_rad_per_sqrt_s=10.0), seed=1)[1].mean()
    assert rough > calm


def test_qber_counting_noise():
    _, q = qber_trace(30.0, seed=0, bin_s=1.0, clicks_per_bin=1e5)
    assert q.std() > 1e-4
    assert q.mean() == pytest.approx(0.036, abs=0.002)


def test_trace_csv(tmp_path):
    trace = run_feedback(1.0, drift=DriftModel(seed=6))
    path = tmp_path / "trace.csv"
    write_trace_csv(path, trace, e_floor=0.0359)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "time_s,counts,phi_residual_rad,v_applied,qber"
    assert len(lines) == len(trace) + 1
    trace.write_csv(path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "time_s,counts,phi_residual_rad,v_applied"
