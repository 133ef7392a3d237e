"""Acceptance criteria, each run at its stated tolerance and runtime budget.

Every test records a label and a short detail string; the conftest prints
one PASS/FAIL line per criterion at the end of the session.
"""
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from ftjsim.calibrate import MeasuredTrace, calibrate, perturbed
from ftjsim.circuit import CircuitConfig, NeuronSimulator, run_neuron, sweep_pulses_to_fire
from ftjsim.device import DESCENDING, FtjDevice, FtjParams, FtjState, relax, tau_pe
from ftjsim.experiments import DEFAULT_AMPLITUDES, DEFAULT_WIDTHS, accumulate, hysteresis, pund
from ftjsim.waveforms import DriveSchedule, hold

P = FtjParams()
CFG = CircuitConfig()
UC_CM2 = 1e-2  # C/m^2 per uC/cm^2


@pytest.fixture
def report(record_property):
    def _report(label, detail=""):
        record_property("label", label)
        record_property("detail", detail)
        print(f"{label}: {detail}")

    return _report


def test_saturated_loop_remanence(report):
    t0 = time.perf_counter()
    res = hysteresis(P, amplitude=5.0)
    elapsed = time.perf_counter() - t0
    target = 19.9997 * UC_CM2
    report("1 saturated-loop remanence",
           f"P_r+ = {res.remanence_pos / UC_CM2:.4f}, P_r- = {res.remanence_neg / UC_CM2:.4f} uC/cm2")
    assert abs(res.remanence_pos) == pytest.approx(target, rel=0.01)
    assert abs(res.remanence_neg) == pytest.approx(target, rel=0.01)
    assert elapsed < 5.0


def test_pund_peak_and_switched_charge(report):
    t0 = time.perf_counter()
    res = pund(P, amplitude=5.0, width=100e-6)
    elapsed = time.perf_counter() - t0
    expected_q = 2 * P.p_r * P.a_tot
    report("2 PUND peak and switched charge",
           f"peak = {res.peak_switching_current * 1e3:.3f} mA, "
           f"P-U = {res.switched_charge:.4e} C (expected {expected_q:.4e})")
    assert res.peak_switching_current == pytest.approx(2.1e-3, rel=0.3)
    assert res.switched_charge == pytest.approx(expected_q, rel=0.05)
    assert elapsed < 5.0


def _relax_error(tau, n_steps):
    """Relative error of the decaying deviation p - p_target after one tau."""
    p0, target = -P.p_sat, P.p_sat
    p = p0
    for _ in range(n_steps):
        p = relax(target, p, tau, tau / n_steps)
    exact = (p0 - target) * math.exp(-1.0)
    return abs((p - target) - exact) / abs(exact)


def test_backward_euler_against_exponential(report):
    t0 = time.perf_counter()
    tau = tau_pe(4e8, P)
    errors = [_relax_error(tau, n) for n in (100, 1000, 10000)]
    elapsed = time.perf_counter() - t0
    ratios = [errors[0] / errors[1], errors[1] / errors[2]]
    report("3 backward-Euler oracle",
           f"rel. error at tau/100 = {errors[0]:.2e}, decade ratios = {ratios[0]:.2f}, {ratios[1]:.2f}")
    assert errors[0] < 0.01
    for r in ratios:
        assert r == pytest.approx(10.0, rel=0.15)
    assert elapsed < 1.0


def test_accumulative_switching(report):
    t0 = time.perf_counter()
    res = accumulate(P, amplitudes=(3.0, 4.0), widths=(10e-6,), counts=range(1, 513))
    elapsed = time.perf_counter() - t0
    n4, y4 = res.series(4.0, 10e-6)
    n3, y3 = res.series(3.0, 10e-6)
    need4 = res.pulses_to_reach(4.0, 10e-6, 0.9)
    need3 = res.pulses_to_reach(3.0, 10e-6, 0.9)
    report("4 accumulative switching",
           f"n(0.9) = {need4} at 4 V, {need3} at 3 V; final {y4[-1]:.4f}, {y3[-1]:.4f}")
    assert list(n4) == list(range(1, 513))
    assert np.all(np.diff(y4) >= 0)
    assert np.all(np.diff(y3) >= 0)
    assert y4[-1] >= 0.9 and y3[-1] >= 0.9
    assert need3 > need4
    assert elapsed < 30.0


def test_neuron_tunability_sweep(report):
    t0 = time.perf_counter()
    res = sweep_pulses_to_fire(CFG, DEFAULT_AMPLITUDES, DEFAULT_WIDTHS, n_max=200, params=P)
    elapsed = time.perf_counter() - t0
    counts = res.counts
    w10 = res.widths.index(10e-6)
    a3 = res.amplitudes.index(3.0)
    col = counts[:, w10][res.fired[:, w10]]
    row = counts[a3]
    drop_fast = row[0] - row[w10]
    drop_slow = row[w10] - row[-1]
    report("5 neuron tunability",
           f"10 us column {col.max()}..{col.min()}, 3 V row {list(map(int, row))}")
    assert np.all(np.diff(counts, axis=0) <= 0)
    assert np.all(np.diff(counts, axis=1) <= 0)
    assert col.max() >= 10 * col.min()
    assert res.fired[a3, 0]
    assert drop_fast > drop_slow
    assert elapsed < 300.0


def test_read_does_not_disturb(report):
    worst = 0.0
    for p0 in (-P.p_r, 0.0, P.p_r):
        sim = NeuronSimulator(CFG, P, FtjState.initial(P, p0))
        sim.run_precharge()
        start = sim.state.p_dyn
        sim.run_integrate()
        worst = max(worst, abs(sim.state.p_dyn - start))
    report("6 read non-disturb",
           f"max |dP| over one {CFG.t_integrate * 1e6:.0f} us read = {worst / P.p_sat:.2e} P_sat")
    assert CFG.t_integrate == pytest.approx(100e-6) and CFG.v_read == 1.5
    assert worst < 1e-3 * P.p_sat


def test_threshold_tuning(report):
    raised = replace(CFG, v_p1=CFG.v_p1 + 0.1)
    th0, th1 = CFG.inverter1_threshold(), raised.inverter1_threshold()
    n0, _ = run_neuron(CFG, 200, P, record=False)
    n1, _ = run_neuron(raised, 200, P, record=False)
    fixed = replace(CFG, v_bl=CFG.bitline_voltage())
    m0, _ = run_neuron(fixed, 200, P, record=False)
    m1, _ = run_neuron(replace(fixed, v_p1=fixed.v_p1 + 0.1), 200, P, record=False)
    report("7 threshold tuning",
           f"threshold {th0:.4f} -> {th1:.4f} V; pulses {n0} -> {n1} (tracking BL), "
           f"{m0} -> {m1} (fixed BL)")
    assert th1 < th0
    assert n0 is not None and n1 is not None and n1 <= n0
    assert m0 is not None and m1 is not None and m1 <= m0


def _pwl(levels, dwell):
    return DriveSchedule.from_points([(0.0, 0.0)] + [((i + 1) * dwell, v)
                                                     for i, v in enumerate(levels)])


def test_invariant_suite(report, tmp_path):
    failures = []

    # charge consistency and boundedness over an arbitrary bipolar drive
    trace = FtjDevice(P).run(_pwl([4.5, -3.7, 5.2, -5.5, 3.1, 0.0], 20e-6), 0.5e-6)
    q = trace.charge("i_pol")
    dq = (trace.p_dyn[-1] - trace.p_dyn[0]) * P.a_tot
    if abs(q - dq) > 1e-9 * max(abs(dq), P.p_sat * P.a_tot):
        failures.append("charge consistency")
    if np.any(np.abs(trace.p_dyn) > P.p_sat):
        failures.append("boundedness")

    # dt halving, measured against P_sat since the end state may sit near zero
    for levels in ([4.0, 0.0], [3.5, -2.0, 3.8, 0.0], [5.0, -3.4, 0.0]):
        sched = _pwl(levels, 20e-6)
        dt = tau_pe(max(map(abs, levels)) / P.t_fe, P) / 20
        a = FtjDevice(P).run(sched, dt).p_dyn[-1]
        b = FtjDevice(P).run(sched, dt / 2).p_dyn[-1]
        if abs(a - b) >= 0.005 * P.p_sat:
            failures.append(f"dt halving {levels}")

    # minor-loop closure: repeated excursions settle onto one closed cycle
    dev = FtjDevice(P)
    dev.run(DriveSchedule.from_points([(0, 0), (200e-6, 5.0), (400e-6, 0.0), (600e-6, 3.0)]), 1e-6)
    cycle = DriveSchedule.from_points([(0, 3.0), (200e-6, 3.6), (400e-6, 3.0)])
    returns = []
    for _ in range(12):
        dev.run(cycle, 1e-6)
        returns.append(dev.state.p_dyn)
    if abs(returns[-1] - returns[-2]) >= 1e-3 * P.p_sat:
        failures.append("minor-loop closure")

    # zero-field retention over one second
    s = FtjState.initial(P, 0.05)
    s.direction = DESCENDING
    held = FtjDevice(P, s).run(hold(0.0, 1.0), 1e-3)
    if abs(held.p_dyn[-1] - 0.05) >= 1e-6 * 0.05:
        failures.append("retention")

    # both reset schemes land on the same state
    ends = []
    for scheme in ("pulse", "bitline"):
        sim = NeuronSimulator(CFG, P, FtjState.initial(P, 0.15))
        sim.run_reset(scheme)
        sim.run_idle(CFG.t_idle_min)
        ends.append(sim.state.p_dyn)
    if abs(ends[0] - ends[1]) > 0.01 * abs(ends[0]) or abs(ends[0] + P.p_r) > 0.01 * P.p_r:
        failures.append("reset-scheme equivalence")

    # determinism: byte-identical CSVs from repeated runs
    paths = []
    for name in ("a", "b"):
        _, tr = run_neuron(CFG.with_set_pulse(3.5, 10e-6), 20, P)
        path = tmp_path / f"{name}.csv"
        tr.to_csv(path)
        paths.append(path)
    if paths[0].read_bytes() != paths[1].read_bytes():
        failures.append("determinism")

    report("8 invariant suite", "all green" if not failures else "failed: " + ", ".join(failures))
    assert not failures


def test_calibration_self_consistency(report):
    t0 = time.perf_counter()
    trace = pund(P).trace
    data = MeasuredTrace(trace.t, trace.v, trace.i_total)
    free = ("v_p0", "dv_p", "r_a0")
    worst = 0.0
    for factor in (1.2, 0.8):
        res = calibrate(data, free, perturbed(P, free, factor))
        for name in free:
            worst = max(worst, abs(getattr(res.params, name) / getattr(P, name) - 1))
    elapsed = time.perf_counter() - t0
    report("9 calibration self-consistency",
           f"worst parameter error {worst:.2e} from +/-20% starts")
    assert worst < 0.02
    assert elapsed < 60.0
