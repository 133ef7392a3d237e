import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ftjsim.waveforms import (MIN_SLEW_FRACTION, DriveSchedule, PulseSpec, concat,
                              pulse_train, pund_sequence, trapezoid, triangular_pulse)


def test_single_pulse():
    sched = pulse_train(PulseSpec(4.0, 10e-6, 1e-7, 1e-7), 1, 5e-6)
    assert sched.duration == pytest.approx(10.2e-6)
    assert [p.tag for p in sched.phases] == ["pulse"]
    assert sched(5e-6) == 4.0
    assert sched(0.0) == 0.0


@pytest.mark.parametrize("n", [1, 2, 4, 8, 16])
def test_train_duration(n):
    spec = PulseSpec(4.0, 10e-6, 0.1e-6, 0.2e-6, delay=3e-6)
    gap = 7e-6
    sched = pulse_train(spec, n, gap)
    assert sched.duration == pytest.approx(n * 10.3e-6 + (n - 1) * gap + 3e-6, rel=1e-12)
    assert len(sched.phases) == n


def test_square_pulses_get_minimum_slew():
    sched = pulse_train(PulseSpec(4.0, 10e-6), 2, 5e-6)
    times = sched.breakpoints()
    edge = MIN_SLEW_FRACTION * 10e-6
    assert times[1] - times[0] == pytest.approx(edge)
    assert sched.duration == pytest.approx(2 * (10e-6 + 2 * edge) + 5e-6)


def test_baseline_between_pulses():
    spec = PulseSpec(4.0, 10e-6, 1e-7, 1e-7, baseline=0.25)
    sched = pulse_train(spec, 3, 20e-6)
    period = spec.duration + 20e-6
    for i in range(2):
        for frac in (0.1, 0.5, 0.9):
            t = (i + 1) * spec.duration + i * 20e-6 + frac * 20e-6
            assert sched(t) == 0.25
    assert sched(period + spec.rise + 5e-6) == 4.25


@pytest.mark.parametrize("bad", [dict(n=0, gap=1e-6), dict(n=2, gap=-1e-6)])
def test_train_rejects_bad_arguments(bad):
    with pytest.raises(ValueError):
        pulse_train(PulseSpec(1.0, 1e-6), **bad)


def test_negative_width_rejected():
    with pytest.raises(ValueError):
        PulseSpec(1.0, -1e-6)


def test_triangle_peak_and_total_variation():
    sched = triangular_pulse(-5.0, 500e-6)
    assert sched(250e-6) == -5.0
    assert sched(500e-6) == 0.0
    t = np.linspace(0, 500e-6, 2001)
    v = np.array([sched(x) for x in t])
    assert np.sum(np.abs(np.diff(v))) == pytest.approx(10.0, rel=1e-12)
    with pytest.raises(ValueError):
        triangular_pulse(1.0, 0.0)


def test_trapezoid_shape():
    sched = trapezoid(5.0, 100e-6, 0.3)
    assert sched.breakpoints() == pytest.approx([0, 30e-6, 70e-6, 100e-6])
    assert sched(50e-6) == 5.0
    for bad in (0.0, 0.5, 0.7):
        with pytest.raises(ValueError):
            trapezoid(5.0, 100e-6, bad)


def test_pund_sequence_layout():
    sched = pund_sequence(5.0, 100e-6, 0.2)
    assert [p.tag for p in sched.phases] == ["preset", "P", "U", "N", "D"]
    signs = {"preset": -1, "P": 1, "U": 1, "N": -1, "D": -1}
    for ph in sched.phases:
        assert sched(ph.start + ph.duration / 2) == signs[ph.tag] * 5.0
        assert sched(ph.start) == 0.0 and sched(ph.end) == 0.0
    # gaps default to the pulse width, including before and after the train
    assert sched.duration == pytest.approx(5 * 100e-6 + 6 * 100e-6)
    starts = [p.start for p in sched.phases]
    assert np.diff(starts) == pytest.approx([200e-6] * 4)


def test_pund_without_preset_and_custom_gap():
    sched = pund_sequence(5.0, 100e-6, 0.1, gap=20e-6, preset=False)
    assert [p.tag for p in sched.phases] == ["P", "U", "N", "D"]
    assert sched.duration == pytest.approx(4 * 100e-6 + 5 * 20e-6)


def test_zero_amplitude_pund_is_zero():
    sched = pund_sequence(0.0, 100e-6)
    assert all(v == 0.0 for v in sched.values())
    assert all(sched(t) == 0.0 for t in np.linspace(0, sched.duration, 97))


def test_evaluation_clamps_outside_span():
    sched = DriveSchedule.from_points([(1.0, 2.0), (2.0, 3.0)])
    assert sched(0.0) == 2.0
    assert sched(5.0) == 3.0
    assert sched(1.5) == 2.5


def test_breakpoints_must_increase():
    with pytest.raises(ValueError):
        DriveSchedule.from_points([(0.0, 1.0), (0.0, 2.0)])
    with pytest.raises(ValueError):
        DriveSchedule({"v": ([0.0, 1.0], [1.0])})


def test_phase_lookup():
    sched = pund_sequence(5.0, 100e-6)
    assert sched.phase_at(150e-6) == "preset"
    assert sched.phase_at(50e-6) is None


def test_concat_rejects_conflicting_joint():
    a = DriveSchedule.from_points([(0.0, 0.0), (1.0, 1.0)])
    b = DriveSchedule.from_points([(0.0, 2.0), (1.0, 0.0)])
    with pytest.raises(ValueError):
        concat(a, b)


def test_multi_terminal_schedule():
    sched = DriveSchedule({"pl": ([0.0, 1.0], [0.0, 5.0]), "bl": ([0.0, 2.0], [1.0, 1.0])})
    assert sched.duration == 2.0
    assert sched(0.5, "pl") == 2.5
    assert sched(0.5, "bl") == 1.0


def test_csv_round_trip(tmp_path):
    sched = pulse_train(PulseSpec(4.0, 10e-6), 3, 2e-6)
    path = tmp_path / "drive.csv"
    sched.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,V"
    back = DriveSchedule.from_csv(path)
    assert back.breakpoints() == sched.breakpoints()
    assert back.values() == sched.values()


points = st.lists(st.tuples(st.floats(1e-9, 1e-3), st.floats(-10, 10)), min_size=1, max_size=8)


def _from_increments(items):
    t, pts = 0.0, []
    for i, (dt, v) in enumerate(items):
        t = t + dt if i else dt
        pts.append((t, v))
    return DriveSchedule.from_points(pts)


@given(points)
def test_breakpoints_evaluate_exactly(items):
    sched = _from_increments(items)
    for t, v in zip(sched.breakpoints(), sched.values()):
        assert sched(t) == v


@given(points, points, points)
def test_concat_associative_and_additive(a, b, c):
    # every piece starts and ends at zero so the joints agree
    sa, sb, sc = (_from_increments([(0.0, 0.0)] + x + [(1e-6, 0.0)]) for x in (a, b, c))
    left = concat(concat(sa, sb), sc)
    right = concat(sa, concat(sb, sc))
    assert left.breakpoints() == pytest.approx(right.breakpoints(), rel=1e-12, abs=1e-18)
    assert left.values() == right.values()
    assert left.duration == pytest.approx(sa.duration + sb.duration + sc.duration, rel=1e-12)


@given(st.floats(-5, 5), st.floats(1e-7, 1e-3), st.integers(1, 6), st.floats(0, 1e-4))
def test_train_is_baseline_between_pulses(amp, width, n, gap):
    sched = pulse_train(PulseSpec(amp, width), n, gap)
    assert sched(sched.duration) == 0.0
    for ph in sched.phases:
        assert sched(ph.start + ph.duration / 2) == amp
