"""Flat ``key = value`` run configuration with dotted namespaces.

Lines starting with ``#`` and trailing ``# ...`` comments are ignored.
Every key is validated against ``SCHEMA`` before anything runs; unknown or
repeated keys are errors.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Optional

from .errors import ConfigError


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int(s: str) -> int:
    return int(s)


def _pair(s: str) -> tuple:
    parts = s.replace(",", " ").split()
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {s!r}")
    return (float(parts[0]), float(parts[1]))


def _pairs(s: str) -> list:
    """``"-10 10; -5 5"`` -> [(-10.0, 10.0), (-5.0, 5.0)]; empty string -> []."""
    return [_pair(chunk) for chunk in s.split(";") if chunk.strip()]


def _lines(s: str) -> list:
    """``"v:50 w:-10"`` -> [('v', 50.0), ('w', -10.0)]."""
    out = []
    for tok in s.replace(",", " ").split():
        fam, _, val = tok.partition(":")
        if fam not in ("v", "w") or not val:
            raise ValueError(f"null line must look like v:<value> or w:<value>, got {tok!r}")
        out.append((fam, float(val)))
    return out


def _floats(s: str) -> list:
    return [float(tok) for tok in s.replace(",", " ").split()]


def _choice(*options: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {options}, got {s!r}")
        return s
    return parse


def _optional_pair(s: str):
    return None if s.lower() in ("", "none") else _pair(s)


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any
    check: Optional[Callable[[Any], bool]] = None
    rule: str = ""


SCHEMA: dict = {
    "mass": Key(float, 1.0, lambda v: v > 0, "must be positive"),
    "grid.x_min": Key(float, -200.0),
    "grid.x_max": Key(float, 200.0),
    "grid.n": Key(_int, 8001, lambda v: v >= 5, "must be >= 5"),
    "initial.kind": Key(_choice("vacuum", "gaussian", "stationary", "custom"), "gaussian"),
    "initial.sign": Key(_int, 1, lambda v: v in (1, -1), "must be +1 or -1"),
    "initial.base": Key(_int, 1, lambda v: v in (1, -1), "must be +1 or -1"),
    "initial.amplitude": Key(float, 0.01),
    "initial.center": Key(float, 0.0),
    "initial.width": Key(float, 1.0, lambda v: v > 0, "must be positive"),
    "initial.mode": Key(_choice("time_symmetric", "ingoing"), "time_symmetric"),
    "initial.n": Key(_int, 1, lambda v: v >= 1, "must be >= 1"),
    "initial.path": Key(str, ""),
    "evolution.cfl": Key(float, 0.25, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    "evolution.t_end": Key(float, 100.0, lambda v: v > 0, "must be positive"),
    "evolution.stride": Key(_int, 8, lambda v: v >= 1, "must be >= 1"),
    "evolution.boundary_mode": Key(_choice("causal_buffer", "outgoing"), "causal_buffer"),
    "evolution.integrator": Key(_choice("rk4", "rk6"), "rk6"),
    "evolution.window": Key(_optional_pair, None),
    "evolution.support_margin": Key(float, 0.0, lambda v: v >= 0, "must be >= 0"),
    "observers.energy": Key(_bool, True),
    "observers.local": Key(_pairs, []),
    "observers.morawetz": Key(_bool, True),
    "observers.null_lines": Key(_lines, []),
    "observers.identity": Key(_bool, False),
    "observers.identity_a": Key(float, 40.0, lambda v: v > 0, "must be positive"),
    "observers.identity_delta": Key(float, 0.01, lambda v: 0 < v < 0.5, "must lie in (0, 1/2)"),
    "observers.snapshots": Key(_floats, []),
    "observers.pointwise": Key(_bool, True),
    "observers.pointwise_bin": Key(float, 0.5, lambda v: v > 0, "must be positive"),
    "observers.pointwise_margin": Key(float, 5.0, lambda v: v >= 0, "must be >= 0"),
    "horizon.r1": Key(float, 2.1, lambda v: v > 2, "must exceed 2 (units of m)"),
    "horizon.profile": Key(_choice("lapse", "tortoise"), "lapse"),
    "horizon.kappa": Key(float, 6.0, lambda v: v > 0, "must be positive"),
    "output.dir": Key(str, "out"),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse and validate; returns a dict with every schema key filled in."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: key {key!r} given twice")
        spec = SCHEMA[key]
        try:
            parsed = spec.parse(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        if spec.check is not None and not spec.check(parsed):
            raise ConfigError(f"{source}:{lineno}: {key} {spec.rule} (got {val!r})")
        values[key] = parsed
    cfg = {k: values.get(k, spec.default) for k, spec in SCHEMA.items()}
    if not cfg["grid.x_min"] < cfg["grid.x_max"]:
        raise ConfigError(f"{source}: grid.x_min must be below grid.x_max")
    if cfg["initial.kind"] == "custom" and not cfg["initial.path"]:
        raise ConfigError(f"{source}: initial.kind = custom needs initial.path")
    for x1, x2 in cfg["observers.local"]:
        if not x1 < x2:
            raise ConfigError(f"{source}: local window ({x1}, {x2}) must satisfy x1 < x2")
    return cfg


def load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    cfg = parse_config_text(p.read_text(), str(p))
    if cfg["initial.path"] and not Path(cfg["initial.path"]).is_absolute():
        cfg["initial.path"] = str((p.parent / cfg["initial.path"]).resolve())
    return cfg
