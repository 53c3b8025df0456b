"""Run configuration: one TOML document with a section per subcommand.

Every field has a type and either a default or is required. Unknown fields,
wrong types and missing required fields raise :class:`ConfigError` naming the
section and field.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import tomli

from .errors import ConfigError

REQUIRED = object()


@dataclass(frozen=True)
class Field:
    kind: type | tuple[type, ...]
    default: Any = REQUIRED
    # element type when the value is a list
    item: type | None = None


SCHEMA: dict[str, dict[str, Field]] = {
    "simulate": {
        "trajectories": Field(int),
        "duration": Field(float, 0.2),
        "speed": Field(list, [4.0, 12.0], float),
        "spin_rps": Field(list, [0.0, 100.0], float),
        "contrast": Field(float, 0.25),
        "chunk_us": Field(int, 10000),
        "events": Field(bool, True),
        "images": Field(bool, True),
        "image_fps": Field(float, 350.0),
        "image_resolution": Field(int, 60),
    },
    "events": {
        "samples": Field(int, 2000),
        "window_us": Field(int, 8000),
        "contrast": Field(float, 0.25),
        "noise_rate_hz": Field(float, 0.05),
        "camera": Field(str, "event_0"),
    },
    "calibrate": {
        "poses": Field(int, 50),
        "noise_px": Field(float, 0.0),
        "localization": Field(str, "blob"),
        "huber_px": Field(float, 2.0),
        "max_iterations": Field(int, 200),
    },
    "spin": {
        "rates": Field(list, [], float),
        "rate_min": Field(float, 5.0),
        "rate_max": Field(float, 170.0),
        "rate_count": Field(int, 12),
        "axes": Field(int, 20),
        "fps": Field(float, 350.0),
        "resolution": Field(int, 60),
        "frames": Field(int, 10),
    },
    "snn": {
        "steps": Field(list, [8, 16, 32], int),
        "epochs": Field(int, 10),
        "lr": Field(float, 1e-3),
        "batch": Field(int, 32),
        "loss": Field(str, "mse"),
        "schedule": Field(str, "cosine"),
        "conv1": Field(list, [8, 5, 2], int),
        "conv2": Field(list, [16, 5, 2], int),
        "hidden": Field(int, 512),
        "threshold": Field(float, 1.0),
        # wider than the library default of 0.5: trains out of the silent start reliably
        "beta": Field(float, 1.0),
        "test_fraction": Field(float, 0.2),
        "compare_steps": Field(int, 8),
        "compare_epochs": Field(int, 5),
    },
}


def _coerce(section: str, name: str, spec: Field, value: Any) -> Any:
    where = f"[{section}] {name}"
    if spec.kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if spec.kind is list and not isinstance(value, list):
        if spec.item is not None and isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        else:
            raise ConfigError(f"{where}: expected a list, got {value!r}")
    if spec.kind is list:
        out = []
        for v in value:
            if spec.item is float and isinstance(v, (int, float)) and not isinstance(v, bool):
                out.append(float(v))
            elif spec.item is int and isinstance(v, int) and not isinstance(v, bool):
                out.append(v)
            else:
                raise ConfigError(f"{where}: list items must be {spec.item.__name__}, got {v!r}")
        return out
    if spec.kind is int and isinstance(value, bool):
        raise ConfigError(f"{where}: expected int, got {value!r}")
    if not isinstance(value, spec.kind):
        raise ConfigError(f"{where}: expected {spec.kind.__name__}, got {value!r}")
    return value


def parse_config(text: str, sections: tuple[str, ...] | None = None) -> dict[str, dict[str, Any]]:
    """Validate ``text`` and fill defaults. Only ``sections`` (default: all) are
    completed; a required field is an error only in a section that is asked for."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    for name in raw:
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(raw[name], dict):
            raise ConfigError(f"{name} must be a section")
    out = {}
    for section in tuple(SCHEMA) if sections is None else sections:
        given = raw.get(section, {})
        for name in given:
            if name not in SCHEMA[section]:
                raise ConfigError(f"[{section}] {name}: unknown field")
        values = {}
        for name, spec in SCHEMA[section].items():
            if name in given:
                values[name] = _coerce(section, name, spec, given[name])
            elif spec.default is REQUIRED:
                raise ConfigError(f"[{section}] {name}: required field missing")
            else:
                values[name] = list(spec.default) if isinstance(spec.default, list) else spec.default
        out[section] = values
    return out


def load_config(path: str | Path | None, sections: tuple[str, ...]) -> dict[str, dict[str, Any]]:
    if path is None:
        return parse_config("", sections)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, sections)
