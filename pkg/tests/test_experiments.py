import numpy as np
import pytest

from ftjsim.device import FtjDevice, FtjParams, FtjState
from ftjsim.experiments import (accumulate, hysteresis, neuron, pund, read_switched_charge,
                                preset_state)
from ftjsim.circuit import CircuitConfig
from ftjsim.waveforms import triangular_pulse

P = FtjParams()


def test_hysteresis_remanence_and_coercive_voltage():
    res = hysteresis(P)
    assert res.remanence_pos == pytest.approx(P.p_r, rel=0.01)
    assert res.remanence_neg == pytest.approx(-P.p_r, rel=0.01)
    # kinetics delay the switching slightly beyond E_C * t_fe at a finite ramp rate
    assert 3.3 <= res.coercive_pos < 3.3 * 1.05
    assert -3.3 * 1.05 < res.coercive_neg <= -3.3
    assert res.loop_area > 0


def test_slower_sweep_approaches_static_coercive_voltage():
    fast = hysteresis(P, ramp=500e-6).coercive_pos
    slow = hysteresis(P, ramp=5e-3, dt=1e-5).coercive_pos
    assert 3.3 <= slow < fast


def test_hysteresis_loop_traces_asymptotic_branch():
    from ftjsim.device import DESCENDING, asymptotic_polarization

    res = hysteresis(P, ramp=5e-3, dt=1e-5)
    # on the descending sweep well below saturation the device sits on the major branch
    tr = res.trace
    sel = (tr.t > 5e-3) & (tr.t < 8e-3) & (tr.v > 0.5) & (tr.v < 2.0)
    expected = [asymptotic_polarization(e, DESCENDING, 1.0, 0.0, P) for e in tr.e_eff[sel]]
    np.testing.assert_allclose(tr.p_dyn[sel], expected, rtol=1e-3)


def test_zero_amplitude_loop_is_flat():
    res = hysteresis(P, amplitude=0.0)
    assert res.loop_area == 0.0
    assert np.all(res.trace.p_dyn == res.trace.p_dyn[0])


def test_pund_peak_and_charges():
    res = pund(P)
    assert res.peak_switching_current == pytest.approx(2.1e-3, rel=0.3)
    assert res.switched_charge == pytest.approx(2 * P.p_r * P.a_tot, rel=0.05)
    assert abs(res.charges["U"]) < 0.02 * res.charges["P"]
    assert abs(res.charges["D"]) < 0.02 * abs(res.charges["N"])
    assert res.charges["N"] < 0


def test_pund_peak_grows_with_steeper_edges():
    peaks = [pund(P, rise_fraction=r).peak_switching_current for r in (0.05, 0.1, 0.2, 0.3)]
    assert np.all(np.diff(peaks) < 0)


def test_switched_charge_readout_of_full_switch():
    start = preset_state(P)
    assert start.p_dyn == pytest.approx(-P.p_r, rel=0.01)
    dev = FtjDevice(P, start.copy())
    dev.run(triangular_pulse(5.0, 500e-6), 1e-6)
    q = read_switched_charge(P, dev.state)
    assert q == pytest.approx(2 * P.p_r * P.a_tot, rel=0.02)
    # reading a reset device yields nothing
    assert abs(read_switched_charge(P, start)) < 1e-3 * q


def test_accumulation_monotone_and_saturating():
    res = accumulate(P, amplitudes=(3.0, 3.5, 4.0), widths=(10e-6,))
    for amp in (3.0, 3.5, 4.0):
        n, y = res.series(amp, 10e-6)
        assert list(n) == [2 ** i for i in range(10)]
        assert np.all(np.diff(y) >= -1e-9)
        assert y[-1] >= 0.9
    # at each n a higher amplitude switches at least as much
    ys = np.array([res.series(a, 10e-6)[1] for a in (3.0, 3.5, 4.0)])
    assert np.all(np.diff(ys, axis=0) >= -1e-9)
    n3, n4 = res.pulses_to_reach(3.0, 10e-6, 0.9), res.pulses_to_reach(4.0, 10e-6, 0.9)
    assert n3 > n4


def test_accumulation_monotone_in_width():
    res = accumulate(P, amplitudes=(3.0,), widths=(1e-6, 10e-6, 100e-6), counts=(1, 4, 16))
    ys = np.array([res.series(3.0, w)[1] for w in (1e-6, 10e-6, 100e-6)])
    assert np.all(np.diff(ys, axis=0) >= -1e-9)


def test_accumulation_below_coercive_is_negligible():
    res = accumulate(P, amplitudes=(1.0,), counts=(1, 16, 256))
    assert np.all(np.abs(res.series(1.0, 10e-6)[1]) < 0.01)


def test_gap_length_does_not_matter():
    a = accumulate(P, amplitudes=(3.5,), counts=(1, 4, 16), gap=1e-6)
    b = accumulate(P, amplitudes=(3.5,), counts=(1, 4, 16), gap=1e-3)
    np.testing.assert_allclose(a.series(3.5, 10e-6)[1], b.series(3.5, 10e-6)[1], rtol=1e-6)


def test_accumulation_csv(tmp_path):
    res = accumulate(P, amplitudes=(4.0,), counts=(1, 2))
    res.to_csv(tmp_path / "acc.csv")
    lines = (tmp_path / "acc.csv").read_text().splitlines()
    assert lines[0] == "amplitude,width,n,charge,normalized"
    assert len(lines) == 3


def test_accumulation_rejects_empty_input():
    with pytest.raises(ValueError):
        accumulate(P, amplitudes=())
    with pytest.raises(ValueError):
        accumulate(P, counts=(0,))


def test_neuron_summary():
    res = neuron(CircuitConfig(), P, n_max=200)
    assert res.count is not None
    assert len(res.read_levels) == res.count
    s = res.summary()
    assert s["pulses_before_fire"] == res.count
    assert s["first_to_last_read_mV"] > 10


def test_neuron_without_fire_reports_none():
    res = neuron(CircuitConfig().with_set_pulse(1.0, 10e-6), P, n_max=3)
    assert res.count is None
    assert res.summary()["pulses_before_fire"] == "none"


def test_initial_state_is_reset_state():
    s = FtjState.initial(P)
    assert s.p_dyn == -P.p_sat * P.k_init
