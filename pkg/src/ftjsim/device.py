"""Preisach-type compact model of an HZO/Al2O3 ferroelectric tunnel junction.

The device is a ferroelectric capacitor in parallel with a linear dielectric
capacitor and a polarization-dependent non-linear resistor. Polarization
follows tanh branch curves scaled at every field reversal so
that unsaturated loops are tracked, and relaxes towards the branch value
with a field-dependent time constant (backward-Euler kinetics).

All quantities are SI: fields in V/m, polarization in C/m^2, areas in m^2.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

EPS0 = 8.8541878128e-12  # F/m

ASCENDING = 1
DESCENDING = -1

K_MIN = 1e-6

# unit conversions to SI
MV_PER_CM = 1e8  # V/m
UC_PER_CM2 = 1e-2  # C/m^2
CM2 = 1e-4  # m^2


@dataclass(frozen=True)
class FtjParams:
    """Calibration constants of the FTJ model (SI units).

    ``r_a0`` is a leakage current density: the leakage prefactor is
    ``r_a0 * a_tot`` amperes. ``c_de`` left as ``None`` means
    ``EPS0 * eps_r * a_tot / t_fe``.
    """

    e_c: float = 3.3 * MV_PER_CM
    k_init: float = 0.5
    p_sat: float = 20.0000 * UC_PER_CM2
    p_r: float = 19.9997 * UC_PER_CM2
    tau_p: float = 10e-6
    alpha_e: float = 0.25
    a_tot: float = 3.14e-4 * CM2
    r_a0: float = 110e-6 / CM2  # 110 uA/cm^2 in A/m^2
    v_p0: float = 0.36
    dv_p: float = 0.06
    t_fe: float = 10e-9
    c_de: Optional[float] = None
    eps_r: float = 25.0
    minor_loops: bool = True
    # field excursion against the sweep direction needed to register a reversal
    reversal_tol: float = 1e5

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = ("e_c", "p_sat", "p_r", "tau_p", "alpha_e", "a_tot",
                    "r_a0", "v_p0", "dv_p", "t_fe", "eps_r")
        for name in positive:
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not 0 < self.k_init <= 1:
            raise ValueError(f"k_init must lie in (0, 1], got {self.k_init!r}")
        if self.p_r >= self.p_sat:
            raise ValueError("p_r must be strictly smaller than p_sat")
        if self.c_de is not None and self.c_de < 0:
            raise ValueError("c_de must be non-negative")
        if self.reversal_tol < 0:
            raise ValueError("reversal_tol must be non-negative")

    @cached_property
    def c_dielectric(self) -> float:
        if self.c_de is not None:
            return self.c_de
        return EPS0 * self.eps_r * self.a_tot / self.t_fe

    @cached_property
    def g_leak(self) -> float:
        """Leakage prefactor in amperes."""
        return self.r_a0 * self.a_tot

    @cached_property
    def delta(self) -> float:
        return delta_broadening(self)

    @property
    def coercive_voltage(self) -> float:
        return self.e_c * self.t_fe

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, values: dict) -> "FtjParams":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise KeyError(f"unknown FTJ parameter {key!r}")
            kwargs[key] = _coerce(key, raw)
        return cls(**kwargs)


def _coerce(key: str, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key == "minor_loops":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"cannot parse boolean {key}={raw!r}")
    if key == "c_de" and text.lower() in ("", "none", "auto"):
        return None
    return float(text)


@dataclass
class FtjState:
    p_dyn: float
    p_old: float
    k_loop: float
    p_off: float
    direction: int = 0
    e_turn: float = 0.0
    p_turn: float = 0.0
    # running extreme of the sweep field in the current direction
    e_ext: float = 0.0
    e_prev: float = 0.0
    v_prev: float = 0.0

    @classmethod
    def initial(cls, params: FtjParams, p_dyn: Optional[float] = None) -> "FtjState":
        """Reset (OFF) state unless an explicit polarization is given."""
        p0 = -params.p_sat * params.k_init if p_dyn is None else float(p_dyn)
        if abs(p0) > params.p_sat:
            raise ValueError("initial polarization exceeds p_sat")
        return cls(p_dyn=p0, p_old=p0, k_loop=params.k_init, p_off=0.0,
                   e_turn=0.0, p_turn=p0, e_ext=0.0)

    def copy(self) -> "FtjState":
        return replace(self)


class Currents(NamedTuple):
    i_total: float
    i_pol: float
    i_leak: float
    i_disp: float


def delta_broadening(params: FtjParams) -> float:
    """Field width of the tanh branch that puts the remanence at ``p_r``."""
    ratio = params.p_r / params.p_sat
    if not 0 < ratio < 1:
        raise ValueError("delta requires 0 < p_r < p_sat")
    return params.e_c / math.log((1 + ratio) / (1 - ratio))


def branch_sign(direction: int) -> float:
    # ascending branch is centred on +E_C, i.e. uses (E - E_C)
    return -1.0 if direction == ASCENDING else 1.0


def asymptotic_polarization(e_eff: float, direction: int, k_loop: float,
                            p_off: float, params: FtjParams) -> float:
    arg = (e_eff + branch_sign(direction) * params.e_c) / (2 * params.delta)
    return k_loop * params.p_sat * math.tanh(arg) + p_off


def tau_pe(e_eff: float, params: FtjParams) -> float:
    mag = abs(e_eff)
    expo = (params.e_c - mag) / (params.alpha_e * (params.e_c / 10 + mag))
    if expo > 300:
        return math.inf
    return params.tau_p * 10.0 ** expo


def relax(p_target: float, p_old: float, tau: float, dt: float) -> float:
    """Backward-Euler relaxation of ``p_old`` towards ``p_target``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if math.isinf(tau):
        return p_old
    return (p_target * dt + p_old * tau) / (tau + dt)


def update_polarization(state: FtjState, e_eff: float, dt: float,
                        params: FtjParams) -> float:
    """Advance ``state`` in place on its current branch; returns the new p_dyn."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    direction = state.direction or ASCENDING
    target = asymptotic_polarization(e_eff, direction, state.k_loop, state.p_off, params)
    p_new = relax(target, state.p_dyn, tau_pe(e_eff, params), dt)
    state.p_old = state.p_dyn
    state.p_dyn = p_new
    return p_new


def reversal_rescale(e_turn: float, p_turn: float, direction: int,
                     params: FtjParams) -> tuple[float, float]:
    """Scale factor and offset of the branch entered at a reversal.

    The new branch passes through ``(e_turn, p_turn)`` and saturates at
    ``+p_sat`` (ascending) or ``-p_sat`` (descending).
    """
    sat = 1.0 if direction == ASCENDING else -1.0
    t = math.tanh((e_turn + branch_sign(direction) * params.e_c) / (2 * params.delta))
    denom = params.p_sat * (sat - t)
    if denom == 0.0:
        k = K_MIN
    else:
        k = (sat * params.p_sat - p_turn) / denom
        k = min(max(k, K_MIN), 1.0)
    p_off = sat * params.p_sat * (1.0 - k)
    return k, p_off


def polarization_current(p_new: float, p_old: float, dt: float,
                         params: FtjParams) -> float:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return (p_new - p_old) / dt * params.a_tot


def leakage_current(v: float, p_dyn: float, params: FtjParams) -> float:
    v_pe = params.v_p0 - params.dv_p * p_dyn / params.p_sat
    if v_pe <= 0:
        raise ValueError(f"non-positive leakage voltage scale V_PE={v_pe!r}")
    return params.g_leak * math.expm1(v / v_pe)


def _track_direction(state: FtjState, e: float, params: FtjParams) -> None:
    """Detect a sweep reversal of ``e`` and re-scale the active branch.

    A reversal registers once the field has moved back by more than
    ``reversal_tol`` from its running extreme; the turning point is that
    extreme field paired with the present polarization.
    """
    tol = params.reversal_tol
    if state.direction == 0:
        if e > state.e_prev:
            _enter_branch(state, ASCENDING, state.e_prev, state.p_dyn, params)
        elif e < state.e_prev:
            _enter_branch(state, DESCENDING, state.e_prev, state.p_dyn, params)
        return
    if state.direction == ASCENDING:
        if e >= state.e_ext:
            state.e_ext = e
        elif e < state.e_ext - tol:
            _enter_branch(state, DESCENDING, state.e_ext, state.p_dyn, params)
    else:
        if e <= state.e_ext:
            state.e_ext = e
        elif e > state.e_ext + tol:
            _enter_branch(state, ASCENDING, state.e_ext, state.p_dyn, params)


def _enter_branch(state: FtjState, direction: int, e_turn: float,
                  p_turn: float, params: FtjParams) -> None:
    state.direction = direction
    state.e_turn, state.p_turn = e_turn, p_turn
    state.e_ext = e_turn
    if params.minor_loops:
        state.k_loop, state.p_off = reversal_rescale(e_turn, p_turn, direction, params)
    else:
        state.k_loop, state.p_off = params.k_init, 0.0


def prepare_step(state: FtjState, v_sweep: float, params: FtjParams) -> FtjState:
    """Copy of ``state`` with the sweep direction updated for ``v_sweep``.

    Nodal solvers fix the branch once per step this way, then run trial
    steps with ``track=False``.
    """
    new = replace(state)
    _track_direction(new, v_sweep / params.t_fe, params)
    return new


def step(state: FtjState, v_ftj: float, dt: float, params: FtjParams,
         track: bool = True, v_sweep: Optional[float] = None) -> tuple[FtjState, Currents]:
    """Advance the device by ``dt`` with terminal voltage ``v_ftj``.

    ``v_sweep`` is the voltage whose direction drives branch reversals; it
    defaults to ``v_ftj``. Returns a new state; ``state`` is not modified.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    new = replace(state)
    e = v_ftj / params.t_fe
    e_sweep = e if v_sweep is None else v_sweep / params.t_fe
    if track:
        _track_direction(new, e_sweep, params)
    update_polarization(new, e, dt, params)
    if (new.direction == ASCENDING and e_sweep > new.e_ext) or \
            (new.direction == DESCENDING and e_sweep < new.e_ext):
        new.e_ext = e_sweep
    i_pol = (new.p_dyn - new.p_old) / dt * params.a_tot
    i_leak = leakage_current(v_ftj, new.p_dyn, params)
    i_disp = params.c_dielectric * (v_ftj - state.v_prev) / dt
    new.e_prev = e_sweep
    new.v_prev = v_ftj
    return new, Currents(i_pol + i_leak + i_disp, i_pol, i_leak, i_disp)


TRACE_HEADER = ("t", "v", "e_eff", "p_dyn", "i_pol", "i_leak", "i_disp", "i_total")


@dataclass
class DeviceTrace:
    t: np.ndarray
    v: np.ndarray
    e_eff: np.ndarray
    p_dyn: np.ndarray
    i_pol: np.ndarray
    i_leak: np.ndarray
    i_disp: np.ndarray
    i_total: np.ndarray

    def columns(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in TRACE_HEADER]

    def __len__(self) -> int:
        return len(self.t)

    def window(self, t0: float, t1: float) -> "DeviceTrace":
        """Rows with ``t0 < t <= t1``."""
        mask = (self.t > t0) & (self.t <= t1)
        return DeviceTrace(*(col[mask] for col in self.columns()))

    def charge(self, column: str = "i_total") -> float:
        """Time integral of a current column (rectangle rule on step ends)."""
        current = getattr(self, column)
        dt = np.diff(self.t, prepend=self.t[0] if len(self.t) else 0.0)
        return float(np.sum(current * dt))

    def to_csv(self, path) -> None:
        write_csv(path, TRACE_HEADER, zip(*self.columns()))

    @classmethod
    def from_csv(cls, path) -> "DeviceTrace":
        data = read_csv_columns(path, TRACE_HEADER)
        return cls(*(data[name] for name in TRACE_HEADER))


def write_csv(path, header, rows) -> None:
    """Write rows atomically (temp file, then rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(x) for x in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def read_csv_columns(path, required=None) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    if required is not None:
        missing = [name for name in required if name not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
    out = {}
    for j, name in enumerate(header):
        col = [row[j] for row in rows]
        try:
            out[name] = np.array([float(x) for x in col])
        except ValueError:
            out[name] = np.array(col, dtype=object)
    return out


@dataclass
class FtjDevice:
    """Stateful wrapper driving the model through a voltage waveform."""

    params: FtjParams = field(default_factory=FtjParams)
    state: Optional[FtjState] = None
    dp_max: float = 0.01  # max |dp| per accepted step, as a fraction of p_sat
    dt_min: float = 1e-15

    def __post_init__(self):
        if self.state is None:
            self.state = FtjState.initial(self.params)

    def step(self, v: float, dt: float) -> Currents:
        new, cur = step(self.state, v, dt, self.params)
        self.state = new
        return cur

    def advance(self, v_of_t, t0: float, t1: float, dt: float, rows: list) -> None:
        """Integrate from ``t0`` to ``t1`` appending accepted steps to ``rows``.

        Steps are subdivided while the polarization change per step exceeds
        ``dp_max * p_sat``.
        """
        limit = self.dp_max * self.params.p_sat
        t = t0
        while t < t1 - 1e-18:
            h = min(dt, t1 - t)
            while True:
                t_next = t1 if h >= t1 - t else t + h
                v = v_of_t(t_next)
                new, cur = step(self.state, v, t_next - t, self.params)
                if abs(new.p_dyn - self.state.p_dyn) <= limit or h <= self.dt_min:
                    break
                h *= 0.5
            self.state = new
            t = t_next
            rows.append((t, v, v / self.params.t_fe, new.p_dyn,
                         cur.i_pol, cur.i_leak, cur.i_disp, cur.i_total))

    def run(self, schedule, dt: float, terminal: str = "v",
            t_start: Optional[float] = None, t_stop: Optional[float] = None) -> DeviceTrace:
        """Drive the device with one terminal of a ``DriveSchedule``.

        Integration stops at every breakpoint so pulse corners are sampled
        exactly. The first row records the state at ``t_start``.
        """
        if dt <= 0:
            raise ValueError("dt must be positive")
        times = schedule.breakpoints(terminal)
        t0 = times[0] if t_start is None else t_start
        t1 = times[-1] if t_stop is None else t_stop
        v_of_t = schedule.evaluator(terminal)
        s = self.state
        v0 = v_of_t(t0)
        # the device sees the initial level as already applied
        s.v_prev = v0
        s.e_prev = v0 / self.params.t_fe
        rows = [(t0, v0, v0 / self.params.t_fe, s.p_dyn, 0.0,
                 leakage_current(v0, s.p_dyn, self.params), 0.0,
                 leakage_current(v0, s.p_dyn, self.params))]
        stops = [t for t in times if t0 < t < t1] + [t1]
        t = t0
        for t_next in stops:
            self.advance(v_of_t, t, t_next, dt, rows)
            t = t_next
        cols = np.array(rows, dtype=float).T
        return DeviceTrace(*cols)
