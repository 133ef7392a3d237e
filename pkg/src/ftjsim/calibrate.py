"""Least-squares fit of FTJ parameters to a measured current trace.

Coordinate descent in log-parameter space with a golden-section line search
per coordinate. When only leakage parameters are free, the polarization
trajectory does not depend on them, so the model is simulated once and the
residual is evaluated in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import bracket, golden

from .device import FtjParams, FtjState, read_csv_columns, step

FITTABLE = ("v_p0", "dv_p", "r_a0", "e_c", "tau_p", "alpha_e")
LEAKAGE_ONLY = frozenset({"v_p0", "dv_p", "r_a0"})


class CalibrationError(ArithmeticError):
    pass


@dataclass
class MeasuredTrace:
    t: np.ndarray
    v: np.ndarray
    i: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.i = np.asarray(self.i, dtype=float)
        if not (len(self.t) == len(self.v) == len(self.i)) or len(self.t) < 2:
            raise ValueError("trace needs at least two samples of equal-length t, v, i")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("trace times must be strictly increasing")

    @classmethod
    def from_csv(cls, path) -> "MeasuredTrace":
        """Columns ``t``, ``v`` and a current column ``i_total`` (or ``i``)."""
        data = read_csv_columns(path)
        current = "i_total" if "i_total" in data else "i"
        missing = [c for c in ("t", "v", current) if c not in data]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        return cls(data["t"], data["v"], data[current])


@dataclass
class ReplayResult:
    p_dyn: np.ndarray
    i_pol: np.ndarray
    i_disp: np.ndarray
    i_leak: np.ndarray

    @property
    def i_total(self) -> np.ndarray:
        return self.i_pol + self.i_leak + self.i_disp


def replay(params: FtjParams, t: np.ndarray, v: np.ndarray,
           state: Optional[FtjState] = None) -> ReplayResult:
    """Step the model exactly along the sample times of a recorded trace.

    The first sample is the initial condition, as in ``FtjDevice.run``.
    """
    s = FtjState.initial(params) if state is None else state.copy()
    s.v_prev = float(v[0])
    s.e_prev = float(v[0]) / params.t_fe
    n = len(t)
    p = np.empty(n)
    i_pol = np.zeros(n)
    i_disp = np.zeros(n)
    i_leak = np.empty(n)
    p[0] = s.p_dyn
    for j in range(1, n):
        s, cur = step(s, float(v[j]), float(t[j] - t[j - 1]), params)
        p[j], i_pol[j], i_disp[j], i_leak[j] = s.p_dyn, cur.i_pol, cur.i_disp, cur.i_leak
    i_leak[0] = params.g_leak * math.expm1(v[0] / (params.v_p0 - params.dv_p * p[0] / params.p_sat))
    return ReplayResult(p, i_pol, i_disp, i_leak)


@dataclass
class CalibrationResult:
    params: FtjParams
    free: tuple
    initial_residual: float
    final_residual: float
    sweeps: int

    def summary(self) -> dict:
        out = {"initial_residual": self.initial_residual,
               "final_residual": self.final_residual, "sweeps": self.sweeps}
        out.update({name: getattr(self.params, name) for name in self.free})
        return out


class _Objective:
    """Sum of squared current errors over the search coordinates.

    The current is linear in ``r_a0`` (the polarization trajectory does not
    depend on leakage), so a free ``r_a0`` is solved in closed form at every
    evaluation instead of being searched. When both ``v_p0`` and ``dv_p`` are
    free they are searched as the ON- and OFF-state leakage scales
    ``v_p0 -+ dv_p``, which the data constrain independently.
    """

    def __init__(self, data: MeasuredTrace, base: FtjParams, free: Sequence[str]):
        self.data = data
        self.base = base
        self.free = tuple(free)
        self.linear = "r_a0" in self.free
        searched = [n for n in self.free if n != "r_a0"]
        self.split = "v_p0" in searched and "dv_p" in searched
        if self.split:
            searched = [n for n in searched if n not in ("v_p0", "dv_p")] + ["v_on", "v_off"]
        self.coords = tuple(searched)
        self.fast = set(self.free) <= LEAKAGE_ONLY
        if self.fast:
            self._background, self._p_frac = self._simulate(base)

    def start(self) -> dict:
        b = self.base
        named = {"v_on": b.v_p0 - b.dv_p, "v_off": b.v_p0 + b.dv_p}
        return {c: named[c] if c in named else getattr(b, c) for c in self.coords}

    def _param_values(self, coords: dict) -> dict:
        values = dict(coords)
        if self.split:
            v_on, v_off = values.pop("v_on"), values.pop("v_off")
            values["v_p0"], values["dv_p"] = 0.5 * (v_on + v_off), 0.5 * (v_off - v_on)
        return values

    def _simulate(self, params: FtjParams):
        rep = replay(params, self.data.t, self.data.v)
        return rep.i_pol + rep.i_disp, rep.p_dyn / params.p_sat

    def solve(self, coords: dict) -> tuple[float, FtjParams]:
        """Residual and the parameter set it belongs to (``inf`` if invalid)."""
        try:
            params = replace(self.base, **self._param_values(coords))
            if self.fast:
                background, p_frac = self._background, self._p_frac
            else:
                background, p_frac = self._simulate(params)
        except (ValueError, OverflowError):
            return math.inf, self.base
        v_pe = params.v_p0 - params.dv_p * p_frac
        if np.any(v_pe <= 0):
            return math.inf, params
        with np.errstate(over="ignore", invalid="ignore"):
            shape = params.a_tot * np.expm1(self.data.v / v_pe)
            target = self.data.i - background
            if self.linear:
                norm = float(np.dot(shape, shape))
                r_a0 = float(np.dot(shape, target)) / norm if norm > 0 else math.nan
                if not (r_a0 > 0 and math.isfinite(r_a0)):
                    return math.inf, params
                params = replace(params, r_a0=r_a0)
            r = float(np.sum((params.r_a0 * shape - target) ** 2))
        return (r if math.isfinite(r) else math.inf), params

    def __call__(self, coords: dict) -> float:
        return self.solve(coords)[0]


def calibrate(data: MeasuredTrace, free: Sequence[str], start: Optional[FtjParams] = None,
              max_sweeps: int = 200, rtol: float = 1e-12,
              log_step: float = 0.05) -> CalibrationResult:
    """Fit the ``free`` parameters of ``start`` to ``data``.

    Each sweep line-searches every search coordinate in turn on a log
    scale; iteration stops when a sweep improves the residual by less than
    ``rtol`` relative, or after ``max_sweeps``.
    """
    start = start or FtjParams()
    free = tuple(dict.fromkeys(free))
    unknown = [name for name in free if name not in FITTABLE]
    if unknown:
        raise ValueError(f"cannot fit {unknown}; choose from {FITTABLE}")
    initial = _Objective(data, start, ())({})
    if not math.isfinite(initial):
        raise CalibrationError("residual at the starting point is not finite")
    if not free:
        return CalibrationResult(start, free, initial, initial, 0)
    objective = _Objective(data, start, free)
    coords = objective.start()
    current = objective(coords)
    if not math.isfinite(current):
        raise CalibrationError("residual is not finite after solving the linear prefactor")
    sweeps = 0
    while objective.coords and sweeps < max_sweeps:
        sweeps += 1
        before = current
        for name in objective.coords:
            coords, current = _line_search(objective, coords, name, current, log_step)
        if before - current <= rtol * before:
            break
    final, params = objective.solve(coords)
    if not final < initial:
        # already at the optimum up to rounding
        return CalibrationResult(start, free, initial, initial, sweeps)
    return CalibrationResult(params, free, initial, final, sweeps)


def _line_search(objective, coords: dict, name: str, current: float, log_step: float):
    """Golden-section minimum along one log coordinate; keeps the old point
    unless the residual improves."""
    def f(u):
        return objective({**coords, name: math.exp(u)})

    u0 = math.log(coords[name])
    try:
        xa, xb, xc, *_ = bracket(f, u0, u0 + log_step, grow_limit=10.0, maxiter=100)
        u = golden(f, brack=(xa, xb, xc), tol=1e-10)
    except (RuntimeError, ValueError):
        return coords, current
    best = f(u)
    if best < current:
        return {**coords, name: math.exp(u)}, best
    return coords, current


def perturbed(params: FtjParams, names: Sequence[str], factor: float) -> FtjParams:
    """Copy of ``params`` with every named parameter multiplied by ``factor``."""
    return replace(params, **{n: getattr(params, n) * factor for n in names})
