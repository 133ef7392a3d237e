"""Piecewise-linear drive schedules: pulse trains, triangles, PUND sequences."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from .device import read_csv_columns, write_csv

DEFAULT_TERMINAL = "v"
MIN_SLEW_FRACTION = 0.01
PUND_RISE_FRACTION = 0.3


@dataclass(frozen=True)
class Phase:
    tag: str
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class PulseSpec:
    """One trapezoidal pulse. ``width`` is the flat top; edges are extra."""

    amplitude: float
    width: float
    rise: float = 0.0
    fall: float = 0.0
    baseline: float = 0.0
    delay: float = 0.0

    def __post_init__(self):
        for name in ("width", "rise", "fall", "delay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def square(cls, amplitude: float, width: float, baseline: float = 0.0,
               delay: float = 0.0, slew_fraction: float = MIN_SLEW_FRACTION) -> "PulseSpec":
        edge = slew_fraction * width
        return cls(amplitude, width, edge, edge, baseline, delay)

    def with_min_slew(self, slew_fraction: float = MIN_SLEW_FRACTION) -> "PulseSpec":
        edge = slew_fraction * self.width
        return PulseSpec(self.amplitude, self.width, max(self.rise, edge),
                         max(self.fall, edge), self.baseline, self.delay)

    @property
    def duration(self) -> float:
        return self.rise + self.width + self.fall


@dataclass
class DriveSchedule:
    """Per-terminal piecewise-linear voltages plus phase annotations.

    Outside a terminal's breakpoint span the first/last value is held.
    """

    terminals: dict[str, tuple[list[float], list[float]]] = field(default_factory=dict)
    phases: list[Phase] = field(default_factory=list)
    duration: float = 0.0

    def __post_init__(self):
        for name, (times, values) in self.terminals.items():
            _check_breakpoints(name, times, values)
            if times:
                self.duration = max(self.duration, times[-1])

    @classmethod
    def from_points(cls, points: Iterable[tuple[float, float]],
                    terminal: str = DEFAULT_TERMINAL, phases=None,
                    duration: Optional[float] = None) -> "DriveSchedule":
        pts = list(points)
        times = [float(t) for t, _ in pts]
        values = [float(v) for _, v in pts]
        sched = cls({terminal: (times, values)}, list(phases or []))
        if duration is not None:
            sched.duration = max(sched.duration, duration)
        return sched

    def breakpoints(self, terminal: str = DEFAULT_TERMINAL) -> list[float]:
        times, _ = self.terminals[terminal]
        return list(times)

    def values(self, terminal: str = DEFAULT_TERMINAL) -> list[float]:
        return list(self.terminals[terminal][1])

    def evaluator(self, terminal: str = DEFAULT_TERMINAL) -> Callable[[float], float]:
        times, values = self.terminals[terminal]
        return _pwl(times, values)

    def __call__(self, t: float, terminal: str = DEFAULT_TERMINAL) -> float:
        return self.evaluator(terminal)(t)

    def phase_at(self, t: float) -> Optional[str]:
        for ph in self.phases:
            if ph.start <= t < ph.end:
                return ph.tag
        return None

    def shifted(self, offset: float) -> "DriveSchedule":
        terms = {name: ([t + offset for t in times], list(values))
                 for name, (times, values) in self.terminals.items()}
        phases = [Phase(p.tag, p.start + offset, p.duration) for p in self.phases]
        out = DriveSchedule(terms, phases)
        out.duration = self.duration + offset
        return out

    def then(self, other: "DriveSchedule") -> "DriveSchedule":
        """Concatenate ``other`` after this schedule's duration."""
        return concat(self, other)

    def to_csv(self, path, terminal: str = DEFAULT_TERMINAL) -> None:
        times, values = self.terminals[terminal]
        write_csv(path, ("t", "V"), zip(times, values))

    @classmethod
    def from_csv(cls, path, terminal: str = DEFAULT_TERMINAL) -> "DriveSchedule":
        data = read_csv_columns(path, ("t", "V"))
        return cls.from_points(zip(data["t"].tolist(), data["V"].tolist()), terminal)


def _check_breakpoints(name: str, times, values) -> None:
    if len(times) != len(values):
        raise ValueError(f"terminal {name!r}: times and values differ in length")
    for a, b in zip(times, times[1:]):
        if not b > a:
            raise ValueError(f"terminal {name!r}: breakpoints must be strictly increasing")


def _pwl(times: list[float], values: list[float]) -> Callable[[float], float]:
    if not times:
        return lambda t: 0.0
    first_t, last_t = times[0], times[-1]
    first_v, last_v = values[0], values[-1]

    def evaluate(t: float) -> float:
        if t <= first_t:
            return first_v
        if t >= last_t:
            return last_v
        i = bisect.bisect_right(times, t) - 1
        t0 = times[i]
        if t == t0:
            return values[i]
        v0, v1 = values[i], values[i + 1]
        return v0 + (v1 - v0) * (t - t0) / (times[i + 1] - t0)

    return evaluate


def _merge_points(head: list[tuple[float, float]], tail: list[tuple[float, float]]):
    if head and tail and tail[0][0] <= head[-1][0]:
        if tail[0][0] == head[-1][0] and tail[0][1] == head[-1][1]:
            tail = tail[1:]
        else:
            raise ValueError("cannot join schedules: overlapping breakpoints with different values")
    return head + tail


def concat(*schedules: DriveSchedule) -> DriveSchedule:
    out = DriveSchedule()
    for sched in schedules:
        offset = out.duration
        shifted = sched.shifted(offset)
        terms = dict(out.terminals)
        for name, (times, values) in shifted.terminals.items():
            if name in terms:
                old_t, old_v = terms[name]
                merged = _merge_points(list(zip(old_t, old_v)), list(zip(times, values)))
            else:
                merged = list(zip(times, values))
            terms[name] = ([t for t, _ in merged], [v for _, v in merged])
        new = DriveSchedule(terms, out.phases + shifted.phases)
        new.duration = max(offset + sched.duration, new.duration)
        out = new
    return out


def _pulse_points(spec: PulseSpec, t0: float) -> list[tuple[float, float]]:
    base, top = spec.baseline, spec.baseline + spec.amplitude
    pts = [(t0, base)]
    t = t0 + spec.rise
    if spec.rise > 0:
        pts.append((t, top))
    else:
        pts[-1] = (t0, top)
    t_top_end = t + spec.width
    if spec.width > 0:
        pts.append((t_top_end, top))
    t_end = t_top_end + spec.fall
    if spec.fall > 0:
        pts.append((t_end, base))
    elif pts[-1][0] == t_end:
        raise ValueError("zero-slew pulse edges need a minimum slew")
    return pts


def pulse_train(spec: PulseSpec, n: int, gap: float, terminal: str = DEFAULT_TERMINAL,
                tag: str = "pulse", slew_fraction: float = MIN_SLEW_FRACTION) -> DriveSchedule:
    """``n`` identical pulses separated by ``gap`` at baseline.

    Zero rise/fall times are replaced by ``slew_fraction * width``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if gap < 0:
        raise ValueError("gap must be non-negative")
    if spec.rise == 0 or spec.fall == 0:
        spec = spec.with_min_slew(slew_fraction)
    if spec.duration <= 0:
        raise ValueError("pulse has zero duration")
    points = [(0.0, spec.baseline)] if spec.delay > 0 else []
    phases = []
    t0 = spec.delay
    for _ in range(n):
        pts = _pulse_points(spec, t0)
        if points and points[-1][0] == pts[0][0]:
            pts = pts[1:]
        points.extend(pts)
        phases.append(Phase(tag, t0, spec.duration))
        # chain from the previous end so zero gaps join exactly
        t0 = points[-1][0] + gap
    total = spec.delay + n * spec.duration + (n - 1) * gap
    return DriveSchedule.from_points(points, terminal, phases, duration=total)


def triangular_pulse(amplitude: float, width: float,
                     terminal: str = DEFAULT_TERMINAL, tag: str = "triangle") -> DriveSchedule:
    if width <= 0:
        raise ValueError("width must be positive")
    pts = [(0.0, 0.0), (width / 2, float(amplitude)), (width, 0.0)]
    return DriveSchedule.from_points(pts, terminal, [Phase(tag, 0.0, width)])


def hold(value: float, duration: float, terminal: str = DEFAULT_TERMINAL,
         tag: Optional[str] = None) -> DriveSchedule:
    if duration <= 0:
        raise ValueError("duration must be positive")
    phases = [Phase(tag, 0.0, duration)] if tag else []
    return DriveSchedule.from_points([(0.0, value), (duration, value)], terminal, phases)


def trapezoid(amplitude: float, width: float, rise_fraction: float,
              terminal: str = DEFAULT_TERMINAL, tag: str = "pulse") -> DriveSchedule:
    """Trapezoid whose total base width (edges included) is ``width``."""
    if not 0 < rise_fraction < 0.5:
        raise ValueError("rise_fraction must lie in (0, 0.5)")
    edge = rise_fraction * width
    pts = [(0.0, 0.0), (edge, amplitude), (width - edge, amplitude), (width, 0.0)]
    return DriveSchedule.from_points(pts, terminal, [Phase(tag, 0.0, width)])


def pund_sequence(amplitude: float, width: float, rise_fraction: float = PUND_RISE_FRACTION,
                  gap: Optional[float] = None, preset: bool = True,
                  terminal: str = DEFAULT_TERMINAL) -> DriveSchedule:
    """Positive-Up-Negative-Down trapezoid train.

    With ``preset`` a leading negative trapezoid saturates the device so the
    P pulse starts from the fully reset state. Gaps default to ``width``.
    """
    gap = width if gap is None else gap
    if gap <= 0:
        raise ValueError("gap must be positive")
    parts = []
    tags = (["preset"] if preset else []) + ["P", "U", "N", "D"]
    signs = ([-1.0] if preset else []) + [1.0, 1.0, -1.0, -1.0]
    for tag, sign in zip(tags, signs):
        parts.append(hold(0.0, gap, terminal))
        parts.append(trapezoid(sign * amplitude, width, rise_fraction, terminal, tag))
    parts.append(hold(0.0, gap, terminal))
    return concat(*parts)
