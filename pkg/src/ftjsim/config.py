"""Flat key-value configuration files with ``[ftj]``, ``[circuit]`` and
``[experiment]`` sections.

Keys in ``[ftj]`` are the ``FtjParams`` field names. ``[circuit]`` takes the
``CircuitConfig`` field names plus per-transistor keys such as ``t4_beta``,
``t4_v_th``, ``t4_lambda`` and ``t4_polarity``. ``[experiment]`` is free-form
and read through the typed getters of ``ExperimentSection``. All values are
SI.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .circuit import CircuitConfig, default_transistors
from .device import FtjParams

SECTIONS = ("ftj", "circuit", "experiment")
_TRANSISTOR_KEYS = {"v_th": "v_th", "beta": "beta", "lambda": "lam", "lam": "lam",
                    "polarity": "polarity"}


class ConfigError(ValueError):
    """Raised for unreadable, unknown or out-of-range configuration values."""


@dataclass
class ExperimentSection:
    values: dict = field(default_factory=dict)

    def get_float(self, key: str, default: Optional[float] = None) -> Optional[float]:
        raw = self.values.get(key)
        if raw is None or raw.strip() == "":
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[experiment] {key}: expected a number, got {raw!r}") from None

    def get_int(self, key: str, default: Optional[int] = None) -> Optional[int]:
        value = self.get_float(key, None)
        if value is None:
            return default
        if value != int(value):
            raise ConfigError(f"[experiment] {key}: expected an integer, got {value!r}")
        return int(value)

    def get_list(self, key: str, default=None) -> Optional[list[float]]:
        raw = self.values.get(key)
        if raw is None or raw.strip() == "":
            return None if default is None else list(default)
        try:
            return [float(x) for x in raw.replace(";", ",").split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"[experiment] {key}: expected a comma-separated list") from None

    def get_str(self, key: str, default: Optional[str] = None) -> Optional[str]:
        raw = self.values.get(key)
        return default if raw is None or raw.strip() == "" else raw.strip()


@dataclass
class Config:
    ftj: FtjParams = field(default_factory=FtjParams)
    circuit: CircuitConfig = field(default_factory=CircuitConfig)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    source: Optional[Path] = None


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive field names
    return cp


def parse_config(text: str, source: Optional[Path] = None) -> Config:
    cp = _parser()
    try:
        cp.read_string(text, source=str(source or "<string>"))
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    unknown = [s for s in cp.sections() if s not in SECTIONS]
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")
    ftj = _build_ftj(dict(cp["ftj"]) if cp.has_section("ftj") else {})
    circuit = _build_circuit(dict(cp["circuit"]) if cp.has_section("circuit") else {})
    try:
        circuit.check_read_window(ftj)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    exp = ExperimentSection(dict(cp["experiment"]) if cp.has_section("experiment") else {})
    return Config(ftj, circuit, exp, source)


def load_config(path) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc.strerror}") from None
    return parse_config(text, path)


def _build_ftj(values: dict) -> FtjParams:
    try:
        return FtjParams.from_dict(values)
    except KeyError as exc:
        raise ConfigError(f"[ftj] {exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[ftj] {exc}") from None


def _parse_optional(raw: str) -> Optional[float]:
    text = raw.strip().lower()
    return None if text in ("", "none", "auto") else float(text)


def _build_circuit(values: dict) -> CircuitConfig:
    known = {f.name: f for f in fields(CircuitConfig)}
    transistors = dict(default_transistors())
    kwargs = {}
    for key, raw in values.items():
        name, _, attr = key.partition("_")
        if name in transistors and attr in _TRANSISTOR_KEYS:
            _set_transistor(transistors, name, _TRANSISTOR_KEYS[attr], raw)
            continue
        if key not in known or key == "transistors":
            raise ConfigError(f"[circuit] unknown key {key!r}")
        try:
            if key == "reset_on_fire":
                kwargs[key] = raw.strip().lower()
            elif key in ("v_bl", "fire_threshold"):
                kwargs[key] = _parse_optional(raw)
            else:
                kwargs[key] = float(raw)
        except ValueError:
            raise ConfigError(f"[circuit] {key}: cannot parse {raw!r}") from None
    try:
        return CircuitConfig(transistors=transistors, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"[circuit] {exc}") from None


def _set_transistor(table: dict, name: str, attr: str, raw: str) -> None:
    try:
        value = raw.strip().upper() if attr == "polarity" else float(raw)
        table[name] = replace(table[name], **{attr: value})
    except ValueError as exc:
        raise ConfigError(f"[circuit] {name}_{attr}: {exc}") from None


def dump_ftj(params: FtjParams) -> str:
    """Render parameters as an ``[ftj]`` section that ``load_config`` accepts."""
    lines = [f"{key} = {'none' if value is None else repr(value)}"
             for key, value in params.to_dict().items()]
    return "[ftj]\n" + "\n".join(lines) + "\n"
