"""Transient simulation of the FTJ-CMOS integrate-and-fire neuron.

Topology (transistors T1..T7):

* T1 (N) / T2 (P) form the write/pre-charge access gate between the FTJ
  bottom node (cell) and the bit line, both controlled by the word line.
* T3 is the pass transistor between the cell and n1, the gate of T4.
* T4/T5 and T6/T7 are two inverters whose PMOS loads are biased by
  ``v_p1``/``v_p2``; raising the bias lowers the switching threshold.

The FTJ sits between the plate line (PL) and the cell node. Only one node
is dynamic at a time: the cell node while writing, the merged cell/n1 node
while pre-charging and integrating. Inverters are memoryless DC stages.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .device import (FtjParams, FtjState, leakage_current, prepare_step,
                     read_csv_columns, step, tau_pe, write_csv)
from .waveforms import Phase

RESET = "Reset"
SET = "Set"
PRECHARGE = "Precharge"
INTEGRATE = "Integrate"
IDLE = "Idle"
PHASE_TAGS = (RESET, SET, PRECHARGE, INTEGRATE, IDLE)

TRACE_HEADER = ("t", "phase", "v_pl", "v_bl", "v_wl", "v_n1", "v_inv1",
                "v_out", "p_dyn", "i_ftj", "fire")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class MosfetParams:
    polarity: str = "N"
    v_th: float = 0.45
    beta: float = 200e-6
    lam: float = 0.05

    def __post_init__(self):
        if self.polarity not in ("N", "P"):
            raise ValueError("polarity must be 'N' or 'P'")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


def _square_law(v_gs: float, v_ds: float, v_th: float, beta: float, lam: float) -> float:
    if v_ds < 0:
        # source and drain swap roles
        return -_square_law(v_gs - v_ds, -v_ds, v_th, beta, lam)
    v_ov = v_gs - v_th
    if v_ov <= 0:
        return 0.0
    if v_ds < v_ov:
        return beta * (v_ov * v_ds - 0.5 * v_ds * v_ds) * (1 + lam * v_ds)
    return 0.5 * beta * v_ov * v_ov * (1 + lam * v_ds)


def mosfet_current(params: MosfetParams, v_gs: float, v_ds: float) -> float:
    """Level-1 drain current (positive into the drain)."""
    if params.polarity == "N":
        return _square_law(v_gs, v_ds, params.v_th, params.beta, params.lam)
    return -_square_law(-v_gs, -v_ds, abs(params.v_th), params.beta, params.lam)


def channel_current(params: MosfetParams, v_g: float, v_a: float, v_b: float) -> float:
    """Current flowing from terminal ``a`` to terminal ``b`` through the channel."""
    return mosfet_current(params, v_g - v_b, v_a - v_b)


def inverter_output(v_in: float, v_p: float, n_params: MosfetParams,
                    p_params: MosfetParams, v_dd: float, tol: float = 1e-4) -> float:
    """DC output of an inverter with a gate-biased PMOS load, by bisection."""
    lo, hi = 0.0, v_dd

    def balance(v_out):
        i_p = channel_current(p_params, v_p, v_dd, v_out)
        i_n = channel_current(n_params, v_in, v_out, 0.0)
        return i_p - i_n

    if balance(lo) <= 0:
        return lo
    if balance(hi) >= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if balance(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def switching_threshold(v_p: float, n_params: MosfetParams, p_params: MosfetParams,
                        v_dd: float) -> float:
    """Input voltage at which the inverter output equals its input."""
    return brentq(lambda v: inverter_output(v, v_p, n_params, p_params, v_dd, 1e-12) - v,
                  0.0, v_dd, xtol=1e-12)


def default_transistors() -> dict[str, MosfetParams]:
    access_n = MosfetParams("N", 0.45, 10e-3, 0.05)
    access_p = MosfetParams("P", -0.45, 10e-3, 0.05)
    logic_n = MosfetParams("N", 0.45, 200e-6, 0.05)
    logic_p = MosfetParams("P", -0.45, 80e-6, 0.05)
    return {"t1": access_n, "t2": access_p, "t3": logic_n, "t4": logic_n,
            "t5": logic_p, "t6": logic_n, "t7": logic_p}


@dataclass(frozen=True)
class CircuitConfig:
    v_dd: float = 1.8
    v_bl: Optional[float] = None  # None: inverter-1 threshold minus v_bl_offset
    v_bl_offset: float = 0.04
    v_bl_write: float = 0.0
    v_read: float = 1.5
    v_p1: float = 0.8
    v_p2: float = 0.8
    v_wl_on: float = 3.3
    c_n1: float = 50e-15
    c_cell: float = 5e-15
    t_precharge: float = 2e-6
    t_integrate: float = 100e-6
    t_event_min: float = 150e-6
    t_idle_min: float = 1e-6
    pl_ramp: float = 0.2e-6
    set_amplitude: float = 3.0
    set_width: float = 10e-6
    reset_amplitude: float = -5.0
    reset_width: float = 10e-6
    slew_fraction: float = 0.01
    fire_threshold: Optional[float] = None  # None: v_dd / 2
    fire_hysteresis: float = 0.01
    reset_on_fire: str = "pulse"  # "pulse" (negative PL pulse) | "bitline"
    dt_write: float = 0.5e-6
    dt_read: float = 2e-6
    dt_min: float = 1e-13
    tau_steps: float = 20.0  # steps per kinetic time constant
    dp_max: float = 0.01  # fraction of p_sat per step
    dv_max: float = 1e-3  # floating-node change per step (V)
    transistors: dict = field(default_factory=default_transistors)

    def __post_init__(self):
        if self.t_precharge + self.t_integrate > self.t_event_min:
            raise ValueError("t_precharge + t_integrate must not exceed t_event_min")
        if self.reset_on_fire not in ("pulse", "bitline"):
            raise ValueError("reset_on_fire must be 'pulse' or 'bitline'")
        for name in ("t_precharge", "t_integrate", "set_width", "reset_width", "pl_ramp",
                     "c_n1", "dt_write", "dt_read", "dt_min"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.pl_ramp >= self.t_precharge:
            raise ValueError("pl_ramp must be shorter than t_precharge")
        missing = {f"t{i}" for i in range(1, 8)} - set(self.transistors)
        if missing:
            raise ValueError(f"missing transistor parameters: {sorted(missing)}")

    def inverter1_threshold(self) -> float:
        tr = self.transistors
        return switching_threshold(self.v_p1, tr["t4"], tr["t5"], self.v_dd)

    def inverter2_threshold(self) -> float:
        tr = self.transistors
        return switching_threshold(self.v_p2, tr["t6"], tr["t7"], self.v_dd)

    def bitline_voltage(self) -> float:
        if self.v_bl is not None:
            return self.v_bl
        return self.inverter1_threshold() - self.v_bl_offset

    @property
    def fire_level(self) -> float:
        return self.v_dd / 2 if self.fire_threshold is None else self.fire_threshold

    def check_read_window(self, params: FtjParams) -> None:
        if abs(self.v_read) / params.t_fe >= 0.5 * params.e_c:
            raise ValueError("v_read is not well below the coercive voltage; reads would disturb the FTJ")

    def with_set_pulse(self, amplitude: float, width: float) -> "CircuitConfig":
        return replace(self, set_amplitude=amplitude, set_width=width)


@dataclass
class SimTrace:
    t: np.ndarray
    phase: list
    v_pl: np.ndarray
    v_bl: np.ndarray
    v_wl: np.ndarray
    v_n1: np.ndarray
    v_inv1: np.ndarray
    v_out: np.ndarray
    p_dyn: np.ndarray
    i_ftj: np.ndarray
    fire: np.ndarray
    phases: list = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows: list, phases: list) -> "SimTrace":
        if not rows:
            empty = np.zeros(0)
            return cls(empty, [], *(empty.copy() for _ in range(9)), phases=list(phases))
        cols = list(zip(*rows))
        num = [np.asarray(c, dtype=float) for c in cols[2:10]]
        return cls(np.asarray(cols[0], dtype=float), list(cols[1]), *num,
                   np.asarray(cols[10], dtype=int), phases=list(phases))

    @property
    def fire_times(self) -> np.ndarray:
        return self.t[self.fire.astype(bool)]

    def rows_in(self, tag: str) -> np.ndarray:
        return np.array([p == tag for p in self.phase], dtype=bool)

    def to_csv(self, path) -> None:
        cols = [self.t, self.phase, self.v_pl, self.v_bl, self.v_wl, self.v_n1,
                self.v_inv1, self.v_out, self.p_dyn, self.i_ftj, self.fire]
        write_csv(path, TRACE_HEADER, zip(*cols))

    @classmethod
    def from_csv(cls, path) -> "SimTrace":
        d = read_csv_columns(path, TRACE_HEADER)
        return cls(d["t"], [str(p) for p in d["phase"]], d["v_pl"], d["v_bl"], d["v_wl"],
                   d["v_n1"], d["v_inv1"], d["v_out"], d["p_dyn"], d["i_ftj"],
                   d["fire"].astype(int))


def _pwl(points: Sequence[tuple[float, float]]) -> tuple[list[float], Callable[[float], float]]:
    times = [p[0] for p in points]
    values = [p[1] for p in points]

    def f(t):
        if t <= times[0]:
            return values[0]
        if t >= times[-1]:
            return values[-1]
        for i in range(len(times) - 1):
            if t <= times[i + 1]:
                if t == times[i + 1]:
                    return values[i + 1]
                t0, t1 = times[i], times[i + 1]
                return values[i] + (values[i + 1] - values[i]) * (t - t0) / (t1 - t0)
        return values[-1]

    return times, f


def _trapezoid_points(level: float, amplitude: float, width: float, edge: float):
    return [(0.0, level), (edge, level + amplitude), (edge + width, level + amplitude),
            (2 * edge + width, level)]


class NeuronSimulator:
    """Phase-by-phase transient simulation of one neuron.

    The simulator owns the FTJ state and the node voltages; each
    ``run_*`` call appends a phase to the trace.
    """

    def __init__(self, cfg: CircuitConfig, params: Optional[FtjParams] = None,
                 state: Optional[FtjState] = None, record: bool = True):
        self.cfg = cfg
        self.params = params or FtjParams()
        cfg.check_read_window(self.params)
        self.state = state.copy() if state is not None else FtjState.initial(self.params)
        self.v_bl_read = cfg.bitline_voltage()
        self.record = record
        self.t = 0.0
        self.v_cell = 0.0
        self.v_n1 = 0.0
        self.v_pl = 0.0
        self.state.v_prev = 0.0
        self.state.e_prev = 0.0
        self.rows: list = []
        self.phases: list[Phase] = []
        self.fire_times: list[float] = []
        self._inv_cache = (None, None, None)
        # a fire needs V_out to have dropped below the hysteresis band since
        # the last fire; a reset re-arms
        self.armed = True

    # -- helpers -------------------------------------------------------

    def inverter_chain(self, v_n1: float) -> tuple[float, float]:
        if self._inv_cache[0] == v_n1:
            return self._inv_cache[1], self._inv_cache[2]
        tr, cfg = self.cfg.transistors, self.cfg
        v1 = inverter_output(min(max(v_n1, 0.0), cfg.v_dd), cfg.v_p1, tr["t4"], tr["t5"], cfg.v_dd)
        v2 = inverter_output(v1, cfg.v_p2, tr["t6"], tr["t7"], cfg.v_dd)
        self._inv_cache = (v_n1, v1, v2)
        return v1, v2

    def trace(self) -> SimTrace:
        return SimTrace.from_rows(self.rows, self.phases)

    def _access_current(self, v_x: float, v_bl: float, v_wl: float) -> float:
        tr = self.cfg.transistors
        wlb = self.cfg.v_wl_on - v_wl
        return (channel_current(tr["t1"], v_wl, v_x, v_bl)
                + channel_current(tr["t2"], wlb, v_x, v_bl))

    def _solve_node(self, prepared: FtjState, v_pl: float, v_bl: float, x_prev: float,
                    cap: float, h: float, access_on: bool, v_wl: float, v_sweep: float):
        params = self.params

        def kcl(x):
            _, cur = step(prepared, v_pl - x, h, params, track=False, v_sweep=v_sweep)
            out = cap * (x - x_prev) / h
            if access_on:
                out += self._access_current(x, v_bl, v_wl)
            return cur.i_total - out

        lo = min(v_pl, v_bl, x_prev) - 0.5
        hi = max(v_pl, v_bl, x_prev) + 0.5
        f_lo, f_hi = kcl(lo), kcl(hi)
        tries = 0
        while f_lo * f_hi > 0 and tries < 6:
            lo -= 2.0 ** tries
            hi += 2.0 ** tries
            f_lo, f_hi = kcl(lo), kcl(hi)
            tries += 1
        if not (math.isfinite(f_lo) and math.isfinite(f_hi)) or f_lo * f_hi > 0:
            raise SimulationError("node equation has no bracketing root")
        x = brentq(kcl, lo, hi, xtol=1e-10, rtol=1e-12, maxiter=200)
        new, cur = step(prepared, v_pl - x, h, params, track=False, v_sweep=v_sweep)
        return x, new, cur

    # -- phase engine -------------------------------------------------

    def simulate_phase(self, tag: str, duration: float, pl_points, bl_points,
                       dt_max: float) -> bool:
        """Advance through one phase; returns True if the neuron fired.

        ``pl_points``/``bl_points`` are (time, V) breakpoints relative to
        the phase start.
        """
        if tag not in PHASE_TAGS:
            raise ValueError(f"unknown phase tag {tag!r}")
        cfg, params = self.cfg, self.params
        access_on = tag != INTEGRATE
        t3_on = tag in (PRECHARGE, INTEGRATE)
        v_wl = cfg.v_wl_on if access_on else 0.0
        pl_times, pl = _pwl(pl_points)
        bl_times, bl = _pwl(bl_points)
        stops = sorted({t for t in pl_times + bl_times if 0 < t < duration} | {duration})

        if t3_on:
            # ideal pass gate: charge sharing between the cell and n1
            # the cell side also carries the FTJ dielectric (PL held)
            c_side = cfg.c_cell + params.c_dielectric
            merged = (cfg.c_n1 * self.v_n1 + c_side * self.v_cell) / (cfg.c_n1 + c_side)
            self.v_cell = self.v_n1 = merged
            cap = cfg.c_n1 + cfg.c_cell
        else:
            cap = cfg.c_cell

        fire_level = cfg.fire_level
        fired = False
        self.phases.append(Phase(tag, self.t, duration))
        if self.record and (not self.rows or self.rows[-1][0] < self.t):
            self._emit(tag, pl(0.0), bl(0.0), v_wl, 0)

        dp_limit = cfg.dp_max * params.p_sat
        t_local = 0.0
        h_grow = dt_max
        for stop in stops:
            while t_local < stop - 1e-18:
                v_est = pl(t_local) - self.v_cell
                h = min(h_grow, dt_max, stop - t_local)
                tau = tau_pe(max(abs(v_est), abs(pl(min(t_local + h, stop)) - self.v_cell))
                             / params.t_fe, params)
                h = min(h, max(tau / cfg.tau_steps, cfg.dt_min))
                while True:
                    t_next = stop if h >= stop - t_local else t_local + h
                    h = t_next - t_local
                    v_pl, v_bl = pl(t_next), bl(t_next)
                    try:
                        # branch reversals follow the applied drive, not loading ripple
                        v_sweep = v_pl - (v_bl if access_on else self.v_bl_read)
                        prepared = prepare_step(self.state, v_sweep, params)
                        x, new, cur = self._solve_node(prepared, v_pl, v_bl, self.v_cell,
                                                       cap, h, access_on, v_wl, v_sweep)
                        ok = abs(new.p_dyn - self.state.p_dyn) <= dp_limit
                        if not access_on:
                            ok = ok and abs(x - self.v_cell) <= cfg.dv_max
                    except (SimulationError, ValueError, OverflowError):
                        ok = False
                        x = new = cur = None
                    if ok:
                        break
                    h *= 0.5
                    if h < cfg.dt_min:
                        raise SimulationError(
                            f"step size below dt_min in {tag} phase at t={self.t + t_local:.6e} s")
                grew = new is not None and abs(new.p_dyn - self.state.p_dyn) < 0.25 * dp_limit
                h_grow = 2 * h if grew else h
                self.state = new
                self.v_cell = x
                if t3_on:
                    self.v_n1 = x
                self.v_pl = v_pl
                t_local = t_next
                fire_flag = 0
                if tag == INTEGRATE:
                    _, v_out = self.inverter_chain(self.v_n1)
                    if self.armed and v_out >= fire_level:
                        fire_flag = 1
                        fired = True
                        self.armed = False
                        self.fire_times.append(self.t + t_local)
                    elif v_out < fire_level - cfg.fire_hysteresis:
                        self.armed = True
                if self.record:
                    self.rows.append(self._row(tag, self.t + t_local, v_pl, v_bl, v_wl,
                                               cur.i_total, fire_flag))
        self.t += duration
        return fired

    def _row(self, tag, t, v_pl, v_bl, v_wl, i_ftj, fire_flag):
        v1, v2 = self.inverter_chain(self.v_n1)
        return (t, tag, v_pl, v_bl, v_wl, self.v_n1, v1, v2, self.state.p_dyn, i_ftj, fire_flag)

    def _emit(self, tag, v_pl, v_bl, v_wl, fire_flag):
        i0 = leakage_current(v_pl - self.v_cell, self.state.p_dyn, self.params)
        self.rows.append(self._row(tag, self.t, v_pl, v_bl, v_wl, i0, fire_flag))

    # -- protocol -----------------------------------------------------

    def _write_dt(self, width: float) -> float:
        return min(self.cfg.dt_write, width / 20)

    def run_reset(self, scheme: Optional[str] = None) -> None:
        cfg = self.cfg
        scheme = scheme or cfg.reset_on_fire
        width = cfg.reset_width
        edge = cfg.slew_fraction * width
        duration = 2 * edge + width
        if scheme == "pulse":
            pl_pts = _trapezoid_points(0.0, cfg.reset_amplitude, width, edge)
            bl_pts = [(0.0, cfg.v_bl_write)]
        else:
            pl_pts = [(0.0, 0.0)]
            bl_pts = _trapezoid_points(cfg.v_bl_write, abs(cfg.reset_amplitude), width, edge)
        self.simulate_phase(RESET, duration, pl_pts, bl_pts, self._write_dt(width))
        self.armed = True

    def run_set(self) -> None:
        cfg = self.cfg
        edge = cfg.slew_fraction * cfg.set_width
        pts = _trapezoid_points(0.0, cfg.set_amplitude, cfg.set_width, edge)
        self.simulate_phase(SET, 2 * edge + cfg.set_width, pts, [(0.0, cfg.v_bl_write)],
                            self._write_dt(cfg.set_width))

    def run_precharge(self) -> None:
        cfg = self.cfg
        pts = [(0.0, self.v_pl), (cfg.pl_ramp, cfg.v_read)]
        self.simulate_phase(PRECHARGE, cfg.t_precharge, pts, [(0.0, self.v_bl_read)],
                            cfg.t_precharge / 10)

    def run_integrate(self) -> bool:
        cfg = self.cfg
        return self.simulate_phase(INTEGRATE, cfg.t_integrate, [(0.0, cfg.v_read)],
                                   [(0.0, self.v_bl_read)], cfg.dt_read)

    def run_idle(self, duration: float) -> None:
        cfg = self.cfg
        ramp = min(cfg.pl_ramp, duration / 2)
        pts = [(0.0, self.v_pl), (ramp, 0.0)]
        self.simulate_phase(IDLE, duration, pts, [(0.0, cfg.v_bl_write)], max(duration / 4, ramp))

    def run_event(self) -> bool:
        """Set pulse, pre-charge, integrate, then idle up to the event spacing."""
        cfg = self.cfg
        t0 = self.t
        self.run_set()
        self.run_precharge()
        fired = self.run_integrate()
        used = self.t - t0
        self.run_idle(max(cfg.t_idle_min, cfg.t_event_min - used))
        return fired


def run_neuron(cfg: CircuitConfig, n_max_pulses: int, params: Optional[FtjParams] = None,
               record: bool = True, reset_after_fire: bool = True):
    """Reset, then apply set events until the first fire.

    Returns ``(pulses_before_fire or None, SimTrace)``; the count includes
    the pulse whose read triggered the fire.
    """
    if n_max_pulses < 1:
        raise ValueError("n_max_pulses must be >= 1")
    sim = NeuronSimulator(cfg, params, record=record)
    sim.run_reset()
    sim.run_idle(cfg.t_idle_min)
    for n in range(1, n_max_pulses + 1):
        if sim.run_event():
            if reset_after_fire:
                sim.run_reset()
                sim.run_idle(cfg.t_idle_min)
            return n, sim.trace()
    return None, sim.trace()


@dataclass
class SweepResult:
    amplitudes: list
    widths: list
    counts: np.ndarray  # no-fire cells hold n_max + 1
    fired: np.ndarray
    n_max: int

    def to_csv(self, path) -> None:
        header = ["amplitude\\width"] + [repr(float(w)) for w in self.widths]
        rows = [[repr(float(a))] + [str(int(c)) for c in row]
                for a, row in zip(self.amplitudes, self.counts)]
        write_csv(path, header, rows)

    @classmethod
    def from_csv(cls, path, n_max: Optional[int] = None) -> "SweepResult":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        widths = [float(w) for w in header[1:]]
        amps = [float(r[0]) for r in rows]
        counts = np.array([[int(c) for c in r[1:]] for r in rows], dtype=int)
        n_max = int(counts.max()) - 1 if n_max is None else n_max
        return cls(amps, widths, counts, counts <= n_max, n_max)


def _sweep_cell(args):
    cfg, params, amplitude, width, n_max = args
    try:
        count, _ = run_neuron(cfg.with_set_pulse(amplitude, width), n_max, params,
                              record=False, reset_after_fire=False)
    except SimulationError:
        return None
    return count


def sweep_threads() -> int:
    raw = os.environ.get("FTJSIM_THREADS")
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def sweep_pulses_to_fire(cfg: CircuitConfig, amplitudes: Sequence[float],
                         widths: Sequence[float], n_max: int = 200,
                         params: Optional[FtjParams] = None,
                         workers: Optional[int] = None) -> SweepResult:
    """Pulses-before-fire for every (amplitude, width) cell, each from a fresh reset.

    Cells that never fire (or fail numerically) hold ``n_max + 1``.
    """
    params = params or FtjParams()
    jobs = [(cfg, params, float(a), float(w), n_max) for a in amplitudes for w in widths]
    workers = sweep_threads() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(j) for j in jobs]
    shape = (len(amplitudes), len(widths))
    fired = np.array([r is not None for r in results], dtype=bool).reshape(shape)
    counts = np.array([r if r is not None else n_max + 1 for r in results],
                      dtype=int).reshape(shape)
    return SweepResult([float(a) for a in amplitudes], [float(w) for w in widths],
                       counts, fired, n_max)
