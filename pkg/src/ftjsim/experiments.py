"""Desk-scale experiments built on the device and circuit models.

Each function returns a small result object holding the raw trace and the
derived figures of merit; the CLI turns these into CSV files and summaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .circuit import CircuitConfig, SimTrace, SweepResult, run_neuron, sweep_pulses_to_fire
from .device import DeviceTrace, FtjDevice, FtjParams, FtjState, write_csv
from .waveforms import (PUND_RISE_FRACTION, DriveSchedule, PulseSpec, concat, hold,
                        pulse_train, pund_sequence, triangular_pulse)

BACK_SWITCH_AMPLITUDE = -5.0
BACK_SWITCH_WIDTH = 500e-6
DEFAULT_COUNTS = tuple(2 ** i for i in range(10))  # 1 ... 512
DEFAULT_AMPLITUDES = tuple(2.5 + 0.25 * i for i in range(11))
DEFAULT_WIDTHS = (1e-6, 3.3e-6, 10e-6, 33e-6, 100e-6, 330e-6, 1e-3)


def _crossings(x: np.ndarray, y: np.ndarray) -> list[float]:
    """x positions where y changes sign, by linear interpolation."""
    out = []
    for i in range(len(y) - 1):
        y0, y1 = y[i], y[i + 1]
        if y0 == 0.0:
            out.append(float(x[i]))
        elif y0 * y1 < 0:
            out.append(float(x[i] + (x[i + 1] - x[i]) * y0 / (y0 - y1)))
    return out


# -- hysteresis ---------------------------------------------------------

@dataclass
class HysteresisResult:
    trace: DeviceTrace
    remanence_pos: float  # C/m^2, descending branch at V = 0
    remanence_neg: float
    coercive_pos: float  # V, ascending branch at P = 0
    coercive_neg: float
    loop_area: float  # closed-loop integral of P dV, C/m^2 * V

    def summary(self) -> dict:
        return {"remanence_pos_uC_cm2": self.remanence_pos * 100,
                "remanence_neg_uC_cm2": self.remanence_neg * 100,
                "coercive_pos_V": self.coercive_pos, "coercive_neg_V": self.coercive_neg,
                "loop_area": self.loop_area}


def hysteresis_schedule(amplitude: float, ramp: float) -> DriveSchedule:
    """0 -> +A -> -A -> +A -> 0 with ``ramp`` seconds per quarter swing."""
    a = float(amplitude)
    pts = [(0.0, 0.0), (ramp, a), (3 * ramp, -a), (5 * ramp, a), (6 * ramp, 0.0)]
    return DriveSchedule.from_points(pts)


def hysteresis(params: Optional[FtjParams] = None, amplitude: float = 5.0,
               ramp: float = 500e-6, dt: float = 1e-6) -> HysteresisResult:
    """Quasi-static triangular P-V loop; read-offs come from the last full cycle."""
    params = params or FtjParams()
    dev = FtjDevice(params)
    trace = dev.run(hysteresis_schedule(amplitude, ramp), dt)
    # the second cycle runs from the +A peak at t = ramp
    cyc = trace.window(ramp, 5 * ramp)
    down = cyc.t <= 3 * ramp
    up = ~down
    rem_pos = _value_at_zero(cyc.v[down], cyc.p_dyn[down])
    rem_neg = _value_at_zero(cyc.v[up], cyc.p_dyn[up])
    vc_pos = _first(_crossings(cyc.v[up], cyc.p_dyn[up]))
    vc_neg = _first(_crossings(cyc.v[down], cyc.p_dyn[down]))
    area = float(np.trapezoid(cyc.p_dyn, cyc.v)) if len(cyc) > 1 else 0.0
    return HysteresisResult(trace, rem_pos, rem_neg, vc_pos, vc_neg, abs(area))


def _value_at_zero(v: np.ndarray, p: np.ndarray) -> float:
    if np.all(v == 0):
        return float(p[0]) if len(p) else float("nan")
    xs = _crossings(np.arange(len(v), dtype=float), v)
    if not xs:
        return float("nan")
    i = int(xs[0])
    frac = xs[0] - i
    return float(p[i] if frac == 0 else p[i] + frac * (p[i + 1] - p[i]))


def _first(values: list[float]) -> float:
    return values[0] if values else float("nan")


# -- PUND ---------------------------------------------------------------

@dataclass
class PundResult:
    trace: DeviceTrace
    schedule: DriveSchedule
    charges: dict  # per pulse tag: integral of i_pol (C)
    peaks: dict  # per pulse tag: max |i_pol| (A)

    @property
    def peak_switching_current(self) -> float:
        return self.peaks["P"]

    @property
    def switched_charge(self) -> float:
        """P minus U polarization charge."""
        return self.charges["P"] - self.charges["U"]

    def summary(self) -> dict:
        return {"peak_switching_current_A": self.peak_switching_current,
                "switched_charge_C": self.switched_charge,
                "u_to_p_ratio": self.charges["U"] / self.charges["P"] if self.charges["P"] else 0.0,
                **{f"charge_{k}_C": v for k, v in self.charges.items()}}


def pund(params: Optional[FtjParams] = None, amplitude: float = 5.0, width: float = 100e-6,
         rise_fraction: float = PUND_RISE_FRACTION, gap: Optional[float] = None,
         dt: float = 0.25e-6) -> PundResult:
    """Trapezoidal PUND train on a pre-saturated device.

    Switching current is the polarization component: at the PUND amplitude
    the exponential leakage term dwarfs it in the total current.
    """
    params = params or FtjParams()
    sched = pund_sequence(amplitude, width, rise_fraction, gap)
    trace = FtjDevice(params).run(sched, dt)
    charges, peaks = {}, {}
    for ph in sched.phases:
        if ph.tag == "preset":
            continue
        w = trace.window(ph.start, ph.end)
        charges[ph.tag] = w.charge("i_pol")
        peaks[ph.tag] = float(np.max(np.abs(w.i_pol))) if len(w) else 0.0
    return PundResult(trace, sched, charges, peaks)


# -- accumulation -------------------------------------------------------

@dataclass
class AccumulationPoint:
    amplitude: float
    width: float
    n: int
    charge: float  # back-switched charge minus the non-switching background (C)
    normalized: float


@dataclass
class AccumulationResult:
    points: list[AccumulationPoint]
    full_charge: float

    HEADER = ("amplitude", "width", "n", "charge", "normalized")

    def rows(self):
        return [(p.amplitude, p.width, p.n, p.charge, p.normalized) for p in self.points]

    def series(self, amplitude: float, width: float) -> tuple[np.ndarray, np.ndarray]:
        sel = [p for p in self.points if p.amplitude == amplitude and p.width == width]
        return (np.array([p.n for p in sel]), np.array([p.normalized for p in sel]))

    def pulses_to_reach(self, amplitude: float, width: float, level: float) -> Optional[int]:
        n, y = self.series(amplitude, width)
        hit = np.nonzero(y >= level)[0]
        return int(n[hit[0]]) if len(hit) else None

    def to_csv(self, path) -> None:
        write_csv(path, self.HEADER, self.rows())


def _back_switch_charge(params: FtjParams, state: FtjState, dt: float) -> tuple[float, FtjState]:
    dev = FtjDevice(params, state.copy())
    trace = dev.run(triangular_pulse(BACK_SWITCH_AMPLITUDE, BACK_SWITCH_WIDTH), dt)
    return -trace.charge("i_total"), dev.state


def read_switched_charge(params: FtjParams, state: FtjState, dt: float = 1e-6) -> float:
    """Charge released by a negative triangular back-switch, background removed.

    A second identical triangle on the now-reset device measures the
    non-switching contribution, which is subtracted.
    """
    first, after = _back_switch_charge(params, state, dt)
    second, _ = _back_switch_charge(params, after, dt)
    return first - second


def preset_state(params: FtjParams, dt: float = 1e-6) -> FtjState:
    """Device state after one back-switch triangle: the reset reference."""
    dev = FtjDevice(params)
    dev.run(triangular_pulse(BACK_SWITCH_AMPLITUDE, BACK_SWITCH_WIDTH), dt)
    return dev.state


def accumulate(params: Optional[FtjParams] = None, amplitudes: Sequence[float] = (4.0,),
               widths: Sequence[float] = (10e-6,), counts: Sequence[int] = DEFAULT_COUNTS,
               gap: float = 10e-6, dt: float = 0.5e-6,
               full_amplitude: float = 5.0, full_width: float = 500e-6) -> AccumulationResult:
    """Normalized switched polarization after ``n`` identical pulses.

    Trains are applied incrementally from a preset device; the state after
    each requested count is copied and read out with the back-switch
    procedure. Gaps sit at zero field, where the state is frozen, so this
    matches separate runs per count.
    """
    params = params or FtjParams()
    counts = sorted({int(n) for n in counts})
    if not counts or counts[0] < 1:
        raise ValueError("counts must be positive integers")
    if not amplitudes or not widths:
        raise ValueError("amplitude and width lists must be non-empty")
    start = preset_state(params)
    full_dev = FtjDevice(params, start.copy())
    full_dev.run(triangular_pulse(full_amplitude, full_width), dt)
    full = read_switched_charge(params, full_dev.state)
    if not full > 0:
        raise FloatingPointError("full-switch reference charge is not positive")
    points = []
    for amp in amplitudes:
        for width in widths:
            dev = FtjDevice(params, start.copy())
            one = pulse_train(PulseSpec.square(float(amp), float(width)), 1, gap)
            period = concat(one, hold(0.0, gap))
            applied = 0
            for n in counts:
                while applied < n:
                    dev.run(period, min(dt, width / 20))
                    applied += 1
                q = read_switched_charge(params, dev.state)
                points.append(AccumulationPoint(float(amp), float(width), n, q, q / full))
    return AccumulationResult(points, full)


# -- neuron -------------------------------------------------------------

@dataclass
class NeuronResult:
    count: Optional[int]
    trace: SimTrace
    bitline: float
    threshold: float
    read_levels: list = field(default_factory=list)  # v_n1 at the end of each read

    def summary(self) -> dict:
        out = {"pulses_before_fire": self.count if self.count is not None else "none",
               "v_bl": self.bitline, "inverter1_threshold": self.threshold}
        if len(self.read_levels) >= 2:
            out["first_to_last_read_mV"] = 1e3 * (self.read_levels[-1] - self.read_levels[0])
        return out


def read_end_levels(trace: SimTrace) -> list[float]:
    """v_n1 at the last sample of every Integrate phase."""
    levels = []
    for ph in trace.phases:
        if ph.tag != "Integrate":
            continue
        mask = (trace.t > ph.start) & (trace.t <= ph.end + 1e-12)
        if np.any(mask):
            levels.append(float(trace.v_n1[mask][-1]))
    return levels


def neuron(cfg: Optional[CircuitConfig] = None, params: Optional[FtjParams] = None,
           n_max: int = 200) -> NeuronResult:
    cfg = cfg or CircuitConfig()
    count, trace = run_neuron(cfg, n_max, params)
    return NeuronResult(count, trace, cfg.bitline_voltage(), cfg.inverter1_threshold(),
                        read_end_levels(trace))


def sweep(cfg: Optional[CircuitConfig] = None, params: Optional[FtjParams] = None,
          amplitudes: Sequence[float] = DEFAULT_AMPLITUDES,
          widths: Sequence[float] = DEFAULT_WIDTHS, n_max: int = 200,
          workers: Optional[int] = None) -> SweepResult:
    return sweep_pulses_to_fire(cfg or CircuitConfig(), amplitudes, widths, n_max, params,
                                workers)
