"""``ftjsim`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
Summary statistics go to stdout as ``key = value`` lines; bulk data goes to
CSV files in ``--out``.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from . import experiments
from .calibrate import FITTABLE, CalibrationError, MeasuredTrace, calibrate
from .circuit import SimulationError, sweep_threads
from .config import Config, ConfigError, dump_ftj, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ("hysteresis", "pund", "accumulate", "neuron", "sweep", "calibrate")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftjsim",
                                     description="FTJ compact model and neuron experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        return p

    p = add("hysteresis", "quasi-static triangular P-V / I-V loop")
    p.add_argument("--amplitude", type=float)
    p.add_argument("--ramp", type=float, help="seconds per quarter swing")
    p.add_argument("--dt", type=float)

    p = add("pund", "trapezoidal PUND sequence")
    p.add_argument("--amplitude", type=float)
    p.add_argument("--width", type=float)
    p.add_argument("--rise-fraction", type=float)
    p.add_argument("--gap", type=float)

    p = add("accumulate", "switched polarization versus number of identical pulses")
    p.add_argument("--amplitudes", type=_floats)
    p.add_argument("--widths", type=_floats)
    p.add_argument("--counts", type=_floats)
    p.add_argument("--gap", type=float)

    p = add("neuron", "integrate-and-fire run from reset to the first spike")
    p.add_argument("--n-max", type=int)
    p.add_argument("--amplitude", type=float, help="set pulse amplitude (V)")
    p.add_argument("--width", type=float, help="set pulse width (s)")

    p = add("sweep", "pulses-before-fire over set amplitude and width")
    p.add_argument("--amplitudes", type=_floats)
    p.add_argument("--widths", type=_floats)
    p.add_argument("--n-max", type=int)
    p.add_argument("--workers", type=int)

    p = add("calibrate", "fit FTJ parameters to a measured t,v,i trace")
    p.add_argument("--data", help="CSV with columns t, v and i_total (or i)")
    p.add_argument("--free", type=_names, help=f"comma-separated subset of {','.join(FITTABLE)}")
    return parser


def _pick(flag, cfg: Config, key: str, default, getter="get_float"):
    if flag is not None:
        return flag
    return getattr(cfg.experiment, getter)(key, default)


def _require_positive(**values) -> None:
    for name, value in values.items():
        items = value if isinstance(value, (list, tuple)) else [value]
        if any(not x > 0 for x in items):
            raise ConfigError(f"{name} must be positive")


def _print_summary(summary: dict) -> None:
    for key, value in summary.items():
        print(f"{key} = {value}")


def cmd_hysteresis(args, cfg: Config, out: Path) -> None:
    amplitude = _pick(args.amplitude, cfg, "amplitude", 5.0)
    ramp = _pick(args.ramp, cfg, "ramp", 500e-6)
    dt = _pick(args.dt, cfg, "dt", 1e-6)
    _require_positive(ramp=ramp, dt=dt)
    result = experiments.hysteresis(cfg.ftj, amplitude, ramp, dt)
    result.trace.to_csv(out / "hysteresis.csv")
    _print_summary(result.summary())


def cmd_pund(args, cfg: Config, out: Path) -> None:
    amplitude = _pick(args.amplitude, cfg, "amplitude", 5.0)
    width = _pick(args.width, cfg, "width", 100e-6)
    rise = _pick(args.rise_fraction, cfg, "rise_fraction", experiments.PUND_RISE_FRACTION)
    gap = _pick(args.gap, cfg, "gap", None)
    _require_positive(width=width)
    if not 0 < rise < 0.5:
        raise ConfigError("rise_fraction must lie in (0, 0.5)")
    if gap is not None:
        _require_positive(gap=gap)
    result = experiments.pund(cfg.ftj, amplitude, width, rise, gap)
    result.trace.to_csv(out / "pund.csv")
    _print_summary(result.summary())


def cmd_accumulate(args, cfg: Config, out: Path) -> None:
    amplitudes = _pick(args.amplitudes, cfg, "amplitudes", [4.0], "get_list")
    widths = _pick(args.widths, cfg, "widths", [10e-6], "get_list")
    counts = _pick(args.counts, cfg, "counts", experiments.DEFAULT_COUNTS, "get_list")
    gap = _pick(args.gap, cfg, "gap", 10e-6)
    if not amplitudes or not widths or not counts:
        raise ConfigError("amplitudes, widths and counts must be non-empty")
    if any(n != int(n) or n < 1 for n in counts):
        raise ConfigError("counts must be positive integers")
    _require_positive(widths=widths, gap=gap)
    result = experiments.accumulate(cfg.ftj, amplitudes, widths, [int(n) for n in counts], gap)
    result.to_csv(out / "accumulate.csv")
    summary = {"full_switch_charge_C": result.full_charge}
    for a in amplitudes:
        for w in widths:
            n = result.pulses_to_reach(float(a), float(w), 0.9)
            summary[f"pulses_to_0.9[{a:g}V,{w:g}s]"] = n if n is not None else "none"
    _print_summary(summary)


def cmd_neuron(args, cfg: Config, out: Path) -> None:
    n_max = _pick(args.n_max, cfg, "n_max", 200, "get_int")
    circuit = cfg.circuit
    if args.amplitude is not None or args.width is not None:
        circuit = circuit.with_set_pulse(
            circuit.set_amplitude if args.amplitude is None else args.amplitude,
            circuit.set_width if args.width is None else args.width)
    _require_positive(n_max=n_max, width=circuit.set_width)
    result = experiments.neuron(circuit, cfg.ftj, n_max)
    result.trace.to_csv(out / "neuron.csv")
    _print_summary(result.summary())


def cmd_sweep(args, cfg: Config, out: Path) -> None:
    amplitudes = _pick(args.amplitudes, cfg, "amplitudes", experiments.DEFAULT_AMPLITUDES,
                       "get_list")
    widths = _pick(args.widths, cfg, "widths", experiments.DEFAULT_WIDTHS, "get_list")
    n_max = _pick(args.n_max, cfg, "n_max", 200, "get_int")
    workers = _pick(args.workers, cfg, "workers", None, "get_int")
    if not amplitudes or not widths:
        raise ConfigError("amplitudes and widths must be non-empty")
    _require_positive(widths=widths, n_max=n_max)
    if workers is None:
        try:
            workers = sweep_threads()
        except ValueError:
            raise ConfigError("FTJSIM_THREADS must be an integer") from None
    _require_positive(workers=workers)
    result = experiments.sweep(cfg.circuit, cfg.ftj, amplitudes, widths, n_max, workers)
    result.to_csv(out / "sweep.csv")
    _print_summary({"cells": result.counts.size, "fired": int(result.fired.sum()),
                    "min_count": int(result.counts.min()), "max_count": int(result.counts.max())})


def cmd_calibrate(args, cfg: Config, out: Path) -> None:
    data = args.data or cfg.experiment.get_str("data")
    if data is None:
        raise ConfigError("calibrate needs --data or [experiment] data")
    path = Path(data)
    if not path.is_absolute() and args.data is None and cfg.source is not None:
        path = cfg.source.parent / path
    free = args.free
    if free is None:
        free = _names(cfg.experiment.get_str("free", ""))
    unknown = [n for n in free if n not in FITTABLE]
    if unknown:
        raise ConfigError(f"cannot fit {unknown}; choose from {','.join(FITTABLE)}")
    try:
        trace = MeasuredTrace.from_csv(path)
    except (OSError, ValueError, StopIteration) as exc:
        raise ConfigError(f"cannot read measured trace {path}: {exc}") from None
    result = calibrate(trace, free, cfg.ftj)
    _write_text(out / "calibrated.ini", dump_ftj(result.params))
    _print_summary(result.summary())


def _write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


HANDLERS = {"hysteresis": cmd_hysteresis, "pund": cmd_pund, "accumulate": cmd_accumulate,
            "neuron": cmd_neuron, "sweep": cmd_sweep, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"ftjsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SimulationError, CalibrationError, ArithmeticError, ValueError) as exc:
        print(f"ftjsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
